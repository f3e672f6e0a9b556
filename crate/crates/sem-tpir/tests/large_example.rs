//! Full end-to-end session on the four-message eight-server instance —
//! 20032 downloaded symbols over 8 iterations. Heavy, so ignored by
//! default; run with `cargo test --test large_example -- --ignored`.

use sem_tpir::audit::check_structure;
use sem_tpir::gf::PrimeField;
use sem_tpir::params::ProblemSpec;
use sem_tpir::runtime::{generate_messages, run_session};
use sem_tpir::{Int, Rat};

#[test]
#[ignore = "large instance (tens of minutes); run explicitly with --ignored"]
fn four_message_instance_full_session_and_structure() {
    let spec = ProblemSpec::with_uniform_priors(
        8,
        2,
        &[16384, 12288, 8192, 4096],
        PrimeField::new(65537).unwrap(),
    )
    .unwrap();

    // Retrieve the shortest message; every iteration contributes 512
    // fresh symbols of the 4096.
    let theta = 3;
    let transcript = run_session(&spec, theta, 20260825).unwrap();
    assert_eq!(transcript.downloads, 20032);
    assert_eq!(transcript.iterations.len(), 8);
    assert_eq!(transcript.recovered.len(), 4096);
    assert_eq!(transcript.rate, Rat::new(Int::from(4096), Int::from(20032)));
    let store = generate_messages(&spec, 20260825);
    assert_eq!(transcript.recovered, store.message(theta));

    // Query shapes are identical whichever message is the target.
    assert!(check_structure(&spec, 20260825).unwrap());
}
