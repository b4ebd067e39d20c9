use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyquery::portal::{Portal, PortalConfig, PortalError};
use skyquery::skynode::register_with_portal;
use skyquery::skysim::{dropout_micro_catalogs, generate, load_catalogs, oracle_crossmatch, write_federation, OracleLimits, SkyConfig};
use skyquery::wire::{read_message, InprocTransport, Message, Service, SocketTransport, Transport};
use skyquery::{parse, FedOptions, FedSpec, Federation, SkyNode, TransportKind, WireConfig};

const CONFIG: &str = r#"
seed = 21
n_bodies = 400
region = { ra_deg = 10.0, dec_deg = 40.0, radius_arcsec = 200.0 }
[[archives]]
name = "SDSS"
sigma_arcsec = 0.1
[[archives]]
name = "TWOMASS"
sigma_arcsec = 0.2
detect_prob = 0.7
[[archives]]
name = "FIRST"
sigma_arcsec = 0.3
detect_prob = 0.6
"#;

const QUERY: &str = "SELECT O.object_id, T.object_id, O.i_flux FROM SDSS:Primary O, TWOMASS:Primary T, FIRST:Primary P \
                     WHERE AREA(10.0, 40.0, 200) AND XMATCH(O, T, !P) < 3.5 AND O.type = STAR";

#[test]
fn files_to_socket_federation_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let sky = generate(&SkyConfig::from_toml(CONFIG).unwrap()).unwrap();
    write_federation(dir.path(), &sky).unwrap();
    let mut spec = String::from("transport = \"socket\"\nmax_chunk = 4096\n[portal]\nendpoint = \"127.0.0.1:0\"\n");
    for (name, sigma) in [("SDSS", 0.1), ("TWOMASS", 0.2), ("FIRST", 0.3)] {
        spec.push_str(&format!(
            "[[node]]\nname = \"{name}\"\nendpoint = \"127.0.0.1:0\"\ncatalog = \"{name}.csv\"\nsigma_arcsec = {sigma}\n"
        ));
    }
    let spec_path = dir.path().join("fed.toml");
    std::fs::write(&spec_path, spec).unwrap();
    let mut log = Vec::new();
    let fed = Federation::from_spec(&FedSpec::load(&spec_path).unwrap(), |l| log.push(l.to_string())).unwrap();
    assert_eq!(log.len(), 4);
    assert!(log[0].starts_with("portal ready at 127.0.0.1:"));

    let engine = fed.query(QUERY).unwrap();
    let cats = load_catalogs(dir.path(), 10).unwrap();
    let oracle = oracle_crossmatch(&parse(QUERY).unwrap(), &cats, &OracleLimits::default()).unwrap();
    assert_eq!(engine, oracle);
    assert!(engine.rows.len() > 20, "{}", engine.rows.len());
}

/// Portal and nodes wired by hand so a node can be taken away.
fn manual() -> (InprocTransport, Portal) {
    let transport = InprocTransport::new(WireConfig::default());
    let shared: Arc<dyn Transport> = Arc::new(transport.clone());
    let portal = Portal::new(Arc::clone(&shared), PortalConfig::default());
    for cat in dropout_micro_catalogs() {
        let name = cat.archive_name().to_string();
        transport.register(format!("n/{name}"), Arc::new(SkyNode::new(cat, Arc::clone(&shared))));
    }
    (transport, portal)
}

#[test]
fn node_lost_after_planning_is_a_chain_error() {
    let (transport, portal) = manual();
    let portal = Arc::new(portal);
    transport.register("portal", Arc::clone(&portal) as Arc<dyn Service>);
    for name in ["SDSS", "TWOMASS", "FIRST"] {
        register_with_portal(&transport, "portal", name, &format!("n/{name}"), Duration::from_secs(5)).unwrap();
    }
    let ast = parse(skyquery::skysim::MICRO_FULL_QUERY).unwrap();
    let plan = portal.plan(&ast).unwrap();
    // Take away the stage that executes first.
    let tail = plan.stages.last().unwrap().endpoint.clone();
    transport.unregister(&tail);
    match portal.execute(&plan) {
        Err(PortalError::Remote { kind, message }) => {
            assert_eq!(kind, "ChainTransportError");
            assert!(message.contains(&tail), "{message}");
        }
        other => panic!("{other:?}"),
    }
    // And now planning itself fails on the count-star query.
    assert!(matches!(portal.plan(&ast), Err(PortalError::PerformanceQueryFailed { .. })));
    transport.unregister("portal");
}

#[test]
fn registration_callback_failure() {
    let (transport, portal) = manual();
    let err = portal
        .svc_registration(&skyquery::portal::RegistrationRequest { archive_name: "SDSS".into(), endpoint: "n/nowhere".into() })
        .unwrap_err();
    assert_eq!(err.kind(), "CallbackFailed");
    // Name and endpoint must agree.
    let err = portal
        .svc_registration(&skyquery::portal::RegistrationRequest { archive_name: "FIRST".into(), endpoint: "n/SDSS".into() })
        .unwrap_err();
    assert_eq!(err.kind(), "CallbackFailed");
    assert!(portal.registry().is_empty());
    drop(transport);
}

#[test]
fn noisy_bytes_never_take_a_node_down() {
    let cats = dropout_micro_catalogs();
    let fed = Federation::local(cats, FedOptions::new(TransportKind::Socket, WireConfig::default())).unwrap();
    let (_, node_ep) = fed.node_endpoints()[0];
    let node_ep = node_ep.to_string();
    let cfg = WireConfig::default();
    let genuine = skyquery::wire::encode(&Message::InformationRequest, 5, &cfg).unwrap()[0].to_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..200 {
        let mut bytes = if i % 2 == 0 { genuine.clone() } else { (0..rng.gen_range(1..200)).map(|_| rng.gen()).collect() };
        if i % 2 == 0 {
            for _ in 0..rng.gen_range(1..4) {
                let at = rng.gen_range(0..bytes.len());
                bytes[at] ^= rng.gen_range(1..=255u8);
            }
        }
        let mut s = TcpStream::connect(&node_ep).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        let _ = s.write_all(&bytes);
        let _ = s.shutdown(std::net::Shutdown::Write);
        let mut reply = Vec::new();
        let _ = s.read_to_end(&mut reply);
        if let Ok((msg, _)) = read_message(&mut reply.as_slice(), &cfg) {
            assert!(matches!(msg, Message::Error(_) | Message::Information(_)), "{msg:?}");
        }
    }
    let info = SocketTransport::new(cfg).call(&node_ep, &Message::InformationRequest, Duration::from_secs(5)).unwrap();
    assert!(matches!(info, Message::Information(i) if i.archive_name == "SDSS"));
    assert_eq!(fed.query(skyquery::skysim::MICRO_DROPOUT_QUERY).unwrap().rows.len(), 1);
}

#[test]
fn concurrent_queries_share_a_federation() {
    let fed = Arc::new(Federation::local(dropout_micro_catalogs(), FedOptions::new(TransportKind::Socket, WireConfig::default())).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let fed = Arc::clone(&fed);
            std::thread::spawn(move || {
                let q = if i % 2 == 0 { skyquery::skysim::MICRO_FULL_QUERY } else { skyquery::skysim::MICRO_DROPOUT_QUERY };
                (i, fed.query(q).unwrap().rows.len())
            })
        })
        .collect();
    for h in handles {
        let (i, n) = h.join().unwrap();
        assert_eq!(n, 1, "query {i}");
    }
    for (name, _) in fed.node_endpoints() {
        assert_eq!(fed.node(name).unwrap().staged_count(), 0);
    }
}
