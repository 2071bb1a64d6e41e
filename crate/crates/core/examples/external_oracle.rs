//! The line protocol end to end over an in-memory pipe: a served synthetic
//! world on one thread, the client oracle on the other.

use std::io::BufReader;
use std::sync::Arc;

use latent_inversion::oracles::{
    make_world, serve, ExpectedShape, ExternalOracle, Greeting, Oracle, OracleResponse, WhichClassifier, WorldParams,
    PROTOCOL_VERSION,
};

fn main() -> latent_inversion::Result<()> {
    let world = Arc::new(make_world(&WorldParams::default())?);
    let (request_rx, request_tx) = std::io::pipe().expect("pipe");
    let (reply_rx, reply_tx) = std::io::pipe().expect("pipe");
    let greeting = Greeting {
        proto: PROTOCOL_VERSION,
        k: world.latent_dim(),
        num_classes: world.num_classes(),
        d: world.feature_dim(),
        trusted: false,
    };
    let served = world.clone();
    let server = std::thread::spawn(move || {
        serve(BufReader::new(request_rx), reply_tx, greeting, |z| {
            let x = served.generate(z).map_err(|e| e.to_string())?;
            let confidence = served.classify(&x, WhichClassifier::Target).map_err(|e| e.to_string())?;
            Ok(OracleResponse { confidence, feature: None })
        })
    });

    let shape = ExpectedShape { latent_dim: 16, num_classes: 10, feature_dim: None };
    let mut oracle = ExternalOracle::connect(BufReader::new(reply_rx), request_tx, shape)?;
    println!("greeting: {:?}", oracle.greeting());
    for scale in [0.0, 0.5, 1.0] {
        let reply = oracle.query(&vec![scale; 16])?;
        let top = latent_inversion::oracles::argmax(&reply.confidence);
        println!("z = {scale} * 1: top class {top} with confidence {:.4}", reply.confidence[top]);
    }
    oracle.shutdown()?;
    server.join().expect("server thread").expect("server io");
    Ok(())
}
