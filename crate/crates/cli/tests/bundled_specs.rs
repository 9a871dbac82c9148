//! The files in `specs/` are generated from the scenario builders. Set
//! `ZERMELO_REGENERATE_SPECS=1` to rewrite them.

use std::path::PathBuf;

use zermelo::magnus::kappa_closed_form;
use zermelo::model::LocalSystem;
use zermelo::operator::gates::{cnot, sigma_x, sigma_z};
use zermelo::specfile::{
    kappa_to_rows, matrix_to_json, ClosedLoopJson, RefactorizationJson, SamplesJson, SpecFile,
    SubspaceJson, SynthesisJson, TargetJson,
};
use zermelo::{scenarios, BathSpec, Rng, SystemSpec, C64};

fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("specs")
}

fn pauli_pair() -> SystemSpec {
    SystemSpec::new(vec![
        LocalSystem::new(-&sigma_z(), sigma_z()).unwrap(),
        LocalSystem::new(-&sigma_x(), sigma_x()).unwrap(),
    ])
    .unwrap()
}

fn synthesis(seed: u64, identical: bool, section: SynthesisJson) -> SpecFile {
    let (sys, bath) = scenarios::three_qubit_synthesis(seed, identical);
    SpecFile {
        synthesis: Some(SynthesisJson {
            seed: Some(1000 + seed),
            restarts: Some(10),
            ..section
        }),
        ..SpecFile::from_parts(&sys, Some(&bath))
    }
}

fn toffoli_at(n: usize, tol: f64) -> SynthesisJson {
    SynthesisJson {
        target: Some(TargetJson::Name("toffoli".into())),
        protocol: Some("sync".into()),
        n_factors: Some(n),
        tol: Some(tol),
        ..Default::default()
    }
}

fn closed_loop(section: ClosedLoopJson) -> SpecFile {
    let (sys, env) = scenarios::closed_loop(0);
    SpecFile {
        closed_loop: Some(ClosedLoopJson {
            steps: Some(576),
            tau: Some(0.1),
            samples: Some(SamplesJson::Mode("exact".into())),
            seed: Some(0),
            ..section
        }),
        ..SpecFile::from_parts(&sys, None).with_environment(&env)
    }
}

fn bundled() -> Vec<(&'static str, SpecFile)> {
    let (sys, bath) = scenarios::refactorization(0);
    let refactorization = SpecFile {
        mu: Some(vec![1.0, 1.0]),
        refactorization: Some(RefactorizationJson {
            m: Some(1),
            slices_per_period: Some(10_000),
            probe_occupation: Some(0),
            residual_tol: Some(1e-5),
        }),
        ..SpecFile::from_parts(&sys, Some(&bath))
    };

    let kappa_bath = scenarios::kappa_bath(&mut Rng::new(5000));
    let kappa = SpecFile::from_parts(&pauli_pair(), Some(&kappa_bath));

    let unit = BathSpec::new(1.0, vec![1], ndarray::arr2(&[[C64::new(0.3, 0.0)]]), 2).unwrap();
    let speed = SpecFile::from_parts(
        &SystemSpec::new(vec![pauli_pair().systems()[0].clone()]).unwrap(),
        Some(&unit),
    );

    let cnot_spec = SpecFile {
        synthesis: Some(SynthesisJson {
            target: Some(TargetJson::Matrix(matrix_to_json(cnot(2, 0, 1).as_array()))),
            protocol: Some("sync".into()),
            n_factors: Some(2),
            kappa: Some(vec![vec![0.0, 0.5], vec![0.5, 0.0]]),
            tol: Some(1e-10),
            ..Default::default()
        }),
        ..SpecFile::from_parts(&pauli_pair(), None)
    };

    let identical = |protocol: &str| SynthesisJson {
        protocol: Some(protocol.into()),
        ..toffoli_at(128, 1e-2)
    };
    let mask = vec![
        vec![true, true, false],
        vec![true, true, true],
        vec![false, true, true],
    ];
    let relay = SynthesisJson {
        target: Some(TargetJson::Name("cnot13".into())),
        protocol: Some("async".into()),
        n_factors: Some(84),
        mask: Some(mask),
        tol: Some(1e-2),
        ..Default::default()
    };

    vec![
        ("refactorization.json", refactorization),
        ("kappa.json", kappa),
        ("speed_limit.json", speed),
        ("cnot.json", cnot_spec),
        (
            "toffoli_n92.json",
            synthesis(0, false, toffoli_at(92, 1e-3)),
        ),
        (
            "toffoli_n32.json",
            synthesis(0, false, toffoli_at(32, 1e-2)),
        ),
        (
            "toffoli_n128.json",
            synthesis(0, false, toffoli_at(128, 1e-2)),
        ),
        ("identical_sync.json", synthesis(0, true, identical("sync"))),
        (
            "identical_async.json",
            synthesis(0, true, identical("async")),
        ),
        ("relay.json", synthesis(0, false, relay)),
        (
            "closed_loop_toffoli.json",
            closed_loop(ClosedLoopJson {
                target: Some(TargetJson::Name("toffoli".into())),
                subspace: Some(SubspaceJson::Name("none".into())),
                iters: Some(300),
                ..Default::default()
            }),
        ),
        (
            "closed_loop_dfs.json",
            closed_loop(ClosedLoopJson {
                target: Some(TargetJson::Name("hadamard-dfs".into())),
                subspace: Some(SubspaceJson::Name("ghz2".into())),
                iters: Some(300),
                ..Default::default()
            }),
        ),
        (
            "closed_loop_null.json",
            closed_loop(ClosedLoopJson {
                target: Some(TargetJson::Name("toffoli".into())),
                subspace: Some(SubspaceJson::Name("none".into())),
                iters: Some(50),
                decoupled: Some(true),
                ..Default::default()
            }),
        ),
    ]
}

#[test]
fn bundled_specs_match_scenario_builders() {
    let regenerate = std::env::var_os("ZERMELO_REGENERATE_SPECS").is_some();
    for (name, spec) in bundled() {
        let path = specs_dir().join(name);
        let mut want = spec.to_json();
        want.push('\n');
        if regenerate {
            std::fs::write(&path, &want).unwrap();
            continue;
        }
        let have = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{name}: {e}; rerun with ZERMELO_REGENERATE_SPECS=1"));
        assert_eq!(
            have, want,
            "{name} is stale; rerun with ZERMELO_REGENERATE_SPECS=1"
        );
        let parsed = SpecFile::from_json(&have).unwrap();
        assert_eq!(parsed, spec, "{name} does not round-trip");
    }
}

#[test]
fn bundled_specs_rebuild_the_scenarios() {
    let spec = SpecFile::from_json(
        &std::fs::read_to_string(specs_dir().join("toffoli_n92.json")).unwrap(),
    )
    .unwrap();
    let (_, bath) = scenarios::three_qubit_synthesis(0, false);
    let k = kappa_closed_form(&spec.require_bath().unwrap()).unwrap();
    assert_eq!(k, kappa_closed_form(&bath).unwrap());
    assert_eq!(kappa_to_rows(&k).len(), 3);

    let spec = SpecFile::from_json(
        &std::fs::read_to_string(specs_dir().join("closed_loop_dfs.json")).unwrap(),
    )
    .unwrap();
    let (sys, env) = scenarios::closed_loop(0);
    let back = spec.environment().unwrap().unwrap();
    assert_eq!(back.h_env, env.h_env);
    assert_eq!(back.b_ops, env.b_ops);
    assert_eq!(back.rho_env, env.rho_env);
    assert_eq!(spec.system().unwrap().systems()[2].s, sys.systems()[2].s);
}
