use super::*;
use crate::model::{gram, make_student, make_teacher, sample_dataset, sample_dataset_from_gram, TeacherEnsemble};
use proptest::prelude::*;

fn logistic(t: f64) -> f64 {
    // ȧ = 6a(2 − a), a(0) = 1
    2.0 / (1.0 + (-12.0 * t).exp())
}

fn scalar_gram(a: f64) -> GramMatrix<f64> {
    GramMatrix::from_diagonal(&[a])
}

#[test]
fn weight_flow_stationary_at_teacher() {
    let teacher = make_teacher::<f64>(4, 2, TeacherEnsemble::GaussianIid, 3).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset(&teacher, 12, 4).unwrap();
    let cfg = IntegratorConfig::new(0.003, 200).record_every(10);
    for data in [Some(&data), None] {
        let traj = gd_weights(&teacher, &a_star, data, &cfg).unwrap();
        assert_eq!(traj.status, FlowStatus::Completed);
        assert!(traj.gen_loss.iter().all(|&e| e == 0.0));
        if let Some(train) = &traj.train_loss {
            assert!(train.iter().all(|&e| e < 1e-28), "{train:?}");
        }
        let TerminalState::Weights(w) = &traj.terminal else { panic!() };
        assert!(w.weights().frobenius_dist(teacher.weights()) < 1e-12);
    }
}

#[test]
fn gram_flow_stationary_at_teacher() {
    let teacher = make_teacher::<f64>(5, 2, TeacherEnsemble::Orthonormal, 9).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset_from_gram(&a_star, 10, 1).unwrap();
    let cfg = IntegratorConfig::new(0.01, 50);
    for data in [Some(&data), None] {
        let traj = flow_gram(&a_star, &a_star, data, &cfg).unwrap();
        let TerminalState::Gram(a) = &traj.terminal else { panic!() };
        assert_eq!(a, &a_star);
        assert!(traj.gen_loss.iter().all(|&e| e == 0.0));
    }
}

#[test]
fn logistic_weights_population() {
    let w0 = WeightMatrix::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), 1.0).unwrap();
    let cfg = IntegratorConfig::new(1e-4, 20_000).record_every(100);
    let traj = gd_weights(&w0, &scalar_gram(2.0), None, &cfg).unwrap();
    assert!(traj.train_loss.is_none());
    for (s, (&t, &e)) in traj.steps.iter().zip(traj.times.iter().zip(&traj.gen_loss)) {
        let a = logistic(t);
        let expected = 1.5 * (a - 2.0) * (a - 2.0);
        assert!((e - expected).abs() < 1e-3, "step {s}: {e} vs {expected}");
    }
    let a = traj.terminal.gram().matrix()[(0, 0)];
    assert!((traj.final_time() - 2.0).abs() < 1e-12);
    assert!((a - logistic(2.0)).abs() < 1e-3);
}

#[test]
fn logistic_gram_population() {
    for method in [Method::Euler, Method::Rk4] {
        let cfg = IntegratorConfig::new(1e-4, 20_000).record_every(500).method(method);
        let traj = flow_gram(&scalar_gram(1.0), &scalar_gram(2.0), None, &cfg).unwrap();
        for snap_t in [0.05, 0.1, 0.2, 2.0] {
            let i = traj.times.iter().position(|&t| (t - snap_t).abs() < 1e-9).unwrap();
            let e = traj.gen_loss[i];
            let a = 2.0 - (e / 1.5).sqrt();
            let tol = if method == Method::Rk4 { 1e-9 } else { 1e-3 };
            assert!((a - logistic(snap_t)).abs() < tol, "{method:?} t={snap_t}: {a}");
        }
    }
}

#[test]
fn small_teacher_is_recovered_from_data() {
    let d = 4;
    let teacher = make_teacher::<f64>(d, 1, TeacherEnsemble::GaussianIid, 11).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset(&teacher, 16, 12).unwrap();
    let w0 = make_student::<f64>(d, 8, 13).unwrap();
    // E_n decays like 1/t² here, so the budget is a few million steps
    let cfg = IntegratorConfig::new(0.003, 5_000_000).record_every(1000).stop_when(Monitor::Train, 5e-9);
    let traj = gd_weights(&w0, &a_star, Some(&data), &cfg).unwrap();
    assert!(!traj.diverged());
    assert!(traj.final_train_loss().unwrap() < 1e-8, "{:?}", traj.final_train_loss());
    assert!(traj.final_gen_loss() < 1e-5, "{}", traj.final_gen_loss());
}

fn weight_vs_gram_deviation(eta: f64, record: usize) -> f64 {
    let d = 4;
    let teacher = make_teacher::<f64>(d, 1, TeacherEnsemble::GaussianIid, 21).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset(&teacher, 12, 22).unwrap();
    let w0 = make_student::<f64>(d, 8, 23).unwrap();
    let steps = (0.5 / eta).round() as usize;
    let cfg = IntegratorConfig::new(eta, steps).record_every(record).with_snapshots();
    let tw = gd_weights(&w0, &a_star, Some(&data), &cfg).unwrap();
    let tg = flow_gram(&gram(&w0), &a_star, Some(&data), &cfg).unwrap();
    max_snapshot_deviation(&tw, &tg).unwrap()
}

#[test]
fn weight_and_gram_flows_agree_to_first_order() {
    let coarse = weight_vs_gram_deviation(2e-3, 10);
    let fine = weight_vs_gram_deviation(1e-3, 20);
    let ratio = coarse / fine;
    assert!(coarse > 0.0 && (1.7..2.3).contains(&ratio), "ratio {ratio} ({coarse} / {fine})");
}

#[test]
fn losses_decrease_and_psd_is_preserved() {
    let d = 6;
    let teacher = make_teacher::<f64>(d, 2, TeacherEnsemble::GaussianIid, 31).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset(&teacher, 30, 32).unwrap();
    let w0 = make_student::<f64>(d, 12, 33).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 3000).with_snapshots();
    let tw = gd_weights(&w0, &a_star, Some(&data), &cfg).unwrap();
    let tg = flow_gram(&gram(&w0), &a_star, Some(&data), &cfg).unwrap();
    let tp = flow_gram(&GramMatrix::identity(d), &a_star, None, &cfg).unwrap();
    for traj in [&tw, &tg] {
        let train = traj.train_loss.as_ref().unwrap();
        assert!(train.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    assert!(tp.gen_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    for snap in tg.snapshots.iter().chain(&tp.snapshots) {
        let ev = snap.eigenvalues();
        assert!(ev[d - 1] >= -1e-8 * ev[0]);
    }
}

#[test]
fn population_flow_has_decreasing_t_e_tail() {
    let teacher = make_teacher::<f64>(6, 2, TeacherEnsemble::Orthonormal, 41).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 20_000).record_every(100).method(Method::Rk4);
    let traj = flow_gram(&GramMatrix::identity(6), &gram(&teacher), None, &cfg).unwrap();
    let report = rate_diagnostics(&traj);
    assert!(report.bound_ok, "{report:?}");
}

#[test]
fn divergence_truncates() {
    let teacher = make_teacher::<f64>(3, 1, TeacherEnsemble::GaussianIid, 51).unwrap();
    let data = sample_dataset(&teacher, 10, 52).unwrap();
    let w0 = make_student::<f64>(3, 4, 53).unwrap();
    let cfg = IntegratorConfig::new(5.0, 1000).record_every(1);
    let traj = gd_weights(&w0, &gram(&teacher), Some(&data), &cfg).unwrap();
    assert!(matches!(traj.status, FlowStatus::Diverged { .. }));
    assert!(traj.gen_loss.iter().all(|e| e.is_finite() && *e <= DIVERGENCE_THRESHOLD));
    let TerminalState::Weights(w) = &traj.terminal else { panic!() };
    assert!(w.weights().all_finite());
}

#[test]
fn stop_rule_fires() {
    let cfg = IntegratorConfig::new(1e-3, 100_000).stop_when(Monitor::Gen, 1e-6);
    let traj = flow_gram(&scalar_gram(1.0), &scalar_gram(2.0), None, &cfg).unwrap();
    let FlowStatus::Stopped { step } = traj.status else { panic!("{:?}", traj.status) };
    assert_eq!(*traj.steps.last().unwrap(), step);
    assert!(traj.final_gen_loss() <= 1e-6);
    assert!(traj.gen_loss[..traj.len() - 1].iter().all(|&e| e > 1e-6));
}

#[test]
fn invalid_config_rejected() {
    let a = scalar_gram(1.0);
    assert!(flow_gram(&a, &a, None, &IntegratorConfig::new(0.0, 10)).is_err());
    assert!(flow_gram(&a, &a, None, &IntegratorConfig::new(0.1, 0)).is_err());
    assert!(flow_gram(&a, &GramMatrix::identity(2), None, &IntegratorConfig::new(0.1, 1)).is_err());
}

#[test]
fn csv_layout() {
    let cfg = IntegratorConfig::new(0.01, 4).record_every(2);
    let traj = flow_gram(&scalar_gram(1.0), &scalar_gram(2.0), None, &cfg).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,t,train_loss,gen_loss");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,0,,"));
    assert!(lines[3].starts_with("4,0.04,,"));
}

#[test]
fn f32_flow_runs() {
    let a_star = GramMatrix::<f32>::from_diagonal(&[2.0, 0.5]);
    let cfg = IntegratorConfig::new(1e-3f32, 5000).record_every(100);
    let traj = flow_gram(&GramMatrix::identity(2), &a_star, None, &cfg).unwrap();
    assert!(traj.final_gen_loss() < 1e-3);
}

#[test]
fn proximal_stationary() {
    let b0 = Matrix::from_diagonal(&[1.0, 2.0, 0.5]);
    let a_star = GramMatrix::symmetrized(b0.matmul(&b0.transpose()).unwrap()).unwrap();
    let data = sample_dataset_from_gram(&a_star, 8, 2).unwrap();
    let traj = proximal_flow(&b0, &a_star, &data, &ProxConfig::new(1e-2, 20)).unwrap();
    let TerminalState::Factor(b) = &traj.terminal else { panic!() };
    assert_eq!(b, &b0);
    assert!(traj.train_loss.unwrap().iter().all(|&e| e == 0.0));
}

#[test]
fn proximal_one_step_scalar() {
    let (b0, a_star, x, tau) = (1.5f64, 0.7f64, -1.3f64, 0.01f64);
    let data = Dataset::new(Matrix::from_vec(1, 1, vec![x]).unwrap(), vec![a_star * x * x]).unwrap();
    // E_n(a) = (a − a*)² x⁴ / 2, so dE_n/da = (a − a*) x⁴
    let expected = b0 - tau * (b0 * b0 - a_star) * x.powi(4) * b0;
    let b = Matrix::from_vec(1, 1, vec![b0]).unwrap();
    let got = proximal_step(&b, &scalar_gram(a_star), &data, tau, ProxSolve::FirstOrder).unwrap().unwrap();
    assert!((got[(0, 0)] - expected).abs() < 1e-14);
}

fn prox_deviation(tau: f64) -> f64 {
    let d = 3;
    let teacher = make_teacher::<f64>(d, 1, TeacherEnsemble::GaussianIid, 61).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset(&teacher, 10, 62).unwrap();
    let b0 = Matrix::from_fn(d, d, |i, j| if i == j { 0.8 } else { 0.1 * (i + j) as f64 });
    let a0 = GramMatrix::symmetrized(b0.matmul(&b0.transpose()).unwrap()).unwrap();
    let horizon = 0.4;
    let record = (1e-2 / tau).round() as usize;
    let mut pc = ProxConfig::new(tau, (horizon / tau).round() as usize);
    pc.record_every = record;
    pc.snapshots = true;
    let prox = proximal_flow(&b0, &a_star, &data, &pc).unwrap();
    let reference = flow_gram(
        &a0,
        &a_star,
        Some(&data),
        &IntegratorConfig::new(1e-4, 4000).record_every(100).method(Method::Rk4).with_snapshots(),
    )
    .unwrap();
    max_snapshot_deviation(&prox, &reference).unwrap()
}

#[test]
fn proximal_converges_to_gram_flow() {
    let coarse = prox_deviation(1e-3);
    let fine = prox_deviation(5e-4);
    let ratio = coarse / fine;
    assert!((1.7..2.3).contains(&ratio), "ratio {ratio} ({coarse} / {fine})");
}

#[test]
fn implicit_prox_close_to_first_order() {
    let teacher = make_teacher::<f64>(3, 1, TeacherEnsemble::GaussianIid, 71).unwrap();
    let a_star = gram(&teacher);
    let data = sample_dataset(&teacher, 10, 72).unwrap();
    let b0 = Matrix::identity(3);
    let implicit = ProxSolve::Implicit { tol: 1e-14, max_iter: 200 };
    let gap = |tau: f64| {
        let e = proximal_step(&b0, &a_star, &data, tau, ProxSolve::FirstOrder).unwrap().unwrap();
        let i = proximal_step(&b0, &a_star, &data, tau, implicit).unwrap().unwrap();
        e.frobenius_dist(&i)
    };
    let ratio = gap(1e-3) / gap(5e-4);
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_step_from_teacher_is_exact(seed in 0u64..1000, d in 1usize..6, m_star in 1usize..4) {
        let teacher = make_teacher::<f64>(d, m_star, TeacherEnsemble::GaussianIid, seed).unwrap();
        let a_star = gram(&teacher);
        let data = sample_dataset_from_gram(&a_star, 2 * d, seed + 1).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1);
        for data in [Some(&data), None] {
            let traj = flow_gram(&a_star, &a_star, data, &cfg).unwrap();
            prop_assert_eq!(traj.terminal.gram(), a_star.clone());
        }
    }

    #[test]
    fn gram_flow_monotone(seed in 0u64..1000) {
        let teacher = make_teacher::<f64>(4, 2, TeacherEnsemble::GaussianIid, seed).unwrap();
        let a_star = gram(&teacher);
        let w0 = make_student::<f64>(4, 6, seed + 7).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 500);
        let traj = flow_gram(&gram(&w0), &a_star, None, &cfg).unwrap();
        prop_assert!(traj.gen_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
