//! Marching solver against the direct global solve on the example configurations.

use std::path::PathBuf;

use dtn_waveguide::model::WaveguideProblem;
use dtn_waveguide::oracle::system_size;
use dtn_waveguide::{direct_solve, parse_problem, solve};
use proptest::prelude::*;

fn config(name: &str) -> WaveguideProblem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name);
    parse_problem(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn example_configs_agree() {
    for name in [
        "uniform_guide.json",
        "small_grating_source.json",
        "small_grating_incident.json",
        "zero_excitation.json",
    ] {
        let p = config(name);
        let size = system_size(&p);
        assert!(p.n_points <= 40 && size.planes <= 200, "{name}");
        let a = solve(&p).unwrap();
        let b = direct_solve(&p).unwrap();
        let d = a.max_interface_discrepancy(&b);
        assert!(d <= 1e-8, "{name}: {d}");
        for (x, y) in a.net_flux.iter().zip(&b.net_flux) {
            assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{name}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_stacks_agree(
        pattern in proptest::collection::vec((0usize..2, 0.05f64..0.4, 3usize..10), 1..6),
        wavelength in 0.9f64..1.8,
        with_source in proptest::bool::ANY,
    ) {
        let mut p = config("small_grating_source.json");
        p.frequency = dtn_waveguide::model::Frequency::Wavelength(wavelength);
        p.incident = config("small_grating_incident.json").incident;
        p.segments = pattern
            .iter()
            .enumerate()
            .map(|(j, &(profile, length, q))| dtn_waveguide::model::Segment {
                profile,
                length,
                q,
                source: (with_source && j == 0).then_some(0),
            })
            .collect();
        let d = solve(&p).unwrap().max_interface_discrepancy(&direct_solve(&p).unwrap());
        prop_assert!(d <= 1e-8, "{}", d);
    }
}
