use serde::Serialize;

use super::{
    check_dim, h, optimal_linear_model, pushforward_law, scalar_tolerance, GaussianError,
    GaussianTask, Result,
};
use crate::divergence::GaussianDist;
use crate::spd::dot;

/// Which divergence measures the output transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    Kl,
    W2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskDecomposition {
    pub variance_term: f64,
    pub bias_term: f64,
    pub total: f64,
}

impl RiskDecomposition {
    pub fn new(variance_term: f64, bias_term: f64) -> Self {
        Self {
            variance_term,
            bias_term,
            total: variance_term + bias_term,
        }
    }

    pub const ZERO: Self = Self {
        variance_term: 0.0,
        bias_term: 0.0,
        total: 0.0,
    };
}

/// Excess target loss of the pretrained model, split as the W₂ risk plus a
/// nonnegative Cauchy–Schwarz gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretReport {
    pub regret: f64,
    pub risk_w: f64,
    pub residual: f64,
}

/// Scalar quantities shared by the scalar-output risk formulas, all taken
/// under the target input law.
struct Pair {
    /// `w_Sᵀ Σ_{T,X} w_S`
    s_src: f64,
    /// `w_Tᵀ Σ_{T,X} w_T`
    s_tgt: f64,
    /// `w_Tᵀ Σ_{T,X} w_S`
    cross: f64,
    /// `(w_T − w_S)ᵀ Σ_{T,X} (w_T − w_S)`
    s_diff: f64,
    /// Mean mismatch `μ_{T,Y} − μ_{S,Y} − w_Sᵀ(μ_{T,X} − μ_{S,X})`.
    delta: f64,
}

fn pair(source: &GaussianTask, target: &GaussianTask) -> Result<Pair> {
    source.require_scalar_output()?;
    target.require_scalar_output()?;
    check_dim("target inputs", source.dim_x(), target.dim_x())?;
    let ms = optimal_linear_model(source)?;
    let mt = optimal_linear_model(target)?;
    let (ws, wt) = (ms.weights(0), mt.weights(0));
    let sx = target.sigma_x();
    let diff: Vec<f64> = wt.iter().zip(ws).map(|(a, b)| a - b).collect();
    let dmx: Vec<f64> = target
        .mu_x()
        .iter()
        .zip(source.mu_x())
        .map(|(a, b)| a - b)
        .collect();
    Ok(Pair {
        s_src: sx.quad_form(ws)?,
        s_tgt: sx.quad_form(wt)?,
        cross: sx.bilinear(wt, ws)?,
        s_diff: sx.quad_form(&diff)?,
        delta: target.mu_y()[0] - source.mu_y()[0] - dot(ws, &dmx),
    })
}

/// KL divergence `KL(ℙ_T ‖ ℙ_ST)` between the optimal target predictive law
/// and the pretrained model's output law on target inputs.
pub fn output_risk_kl(source: &GaussianTask, target: &GaussianTask) -> Result<RiskDecomposition> {
    let p = pair(source, target)?;
    if p.s_src <= scalar_tolerance(p.s_src) {
        return Err(GaussianError::ZeroPretrainedSignal(p.s_src));
    }
    if p.s_tgt <= scalar_tolerance(p.s_tgt) {
        return Err(GaussianError::ZeroTargetSignal(p.s_tgt));
    }
    Ok(RiskDecomposition::new(
        h(p.s_tgt / p.s_src),
        p.delta * p.delta / (2.0 * p.s_src),
    ))
}

/// Squared 2-Wasserstein distance between `ℙ_ST` and `ℙ_T`.
pub fn output_risk_w(source: &GaussianTask, target: &GaussianTask) -> Result<RiskDecomposition> {
    let p = pair(source, target)?;
    Ok(RiskDecomposition::new(
        (p.s_src.sqrt() - p.s_tgt.sqrt()).powi(2),
        p.delta * p.delta,
    ))
}

pub fn regret(source: &GaussianTask, target: &GaussianTask) -> Result<RegretReport> {
    let p = pair(source, target)?;
    let bias = p.delta * p.delta;
    let risk_w = (p.s_src.sqrt() - p.s_tgt.sqrt()).powi(2) + bias;
    // Cauchy–Schwarz in the Σ_{T,X} inner product; clamp rounding noise.
    let residual = (2.0 * ((p.s_tgt * p.s_src).sqrt() - p.cross)).max(0.0);
    Ok(RegretReport {
        regret: p.s_diff + bias,
        risk_w,
        residual,
    })
}

/// `(ℙ_T, ℙ_ST)`: pushforwards of the target input law through the optimal
/// target and the pretrained source model.
pub fn predictive_laws(
    source: &GaussianTask,
    target: &GaussianTask,
) -> Result<(GaussianDist, GaussianDist)> {
    check_dim("target inputs", source.dim_x(), target.dim_x())?;
    let input = target.input_law();
    let p_t = pushforward_law(&optimal_linear_model(target)?, &input)?;
    let p_st = pushforward_law(&optimal_linear_model(source)?, &input)?;
    Ok((p_t, p_st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{kl_gaussian_1d, w2sq_gaussian_1d, Gaussian1D};
    use crate::gaussian::{expected_loss, LinearModel};
    use crate::spd::{Matrix, SymMatrix};
    use proptest::prelude::*;

    fn scalar_task(mx: f64, my: f64, vx: f64, cxy: f64, vy: f64) -> GaussianTask {
        GaussianTask::new(
            vec![mx],
            vec![my],
            SymMatrix::scalar(vx),
            Matrix::from_vec(1, 1, vec![cxy]).unwrap(),
            SymMatrix::scalar(vy),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn worked_pair_kl_and_w() {
        let s = scalar_task(0.0, 0.0, 1.0, 0.5, 1.0);
        let t = scalar_task(0.0, 0.0, 1.0, 0.8, 1.0);
        let kl = output_risk_kl(&s, &t).unwrap();
        assert!(close(kl.variance_term, 0.309_996, 1e-6));
        assert_eq!(kl.bias_term, 0.0);
        let w = output_risk_w(&s, &t).unwrap();
        assert!(close(w.variance_term, 0.09, 1e-15));
        assert_eq!(w.bias_term, 0.0);

        let oracle_kl = kl_gaussian_1d(
            Gaussian1D::new(0.0, 0.64).unwrap(),
            Gaussian1D::new(0.0, 0.25).unwrap(),
        );
        assert!(close(kl.total, oracle_kl, 1e-12));
    }

    #[test]
    fn worked_pair_regret_aligned_and_flipped() {
        let t = scalar_task(0.0, 0.0, 1.0, 0.8, 1.0);
        let r = regret(&scalar_task(0.0, 0.0, 1.0, 0.5, 1.0), &t).unwrap();
        assert!(close(r.regret, 0.09, 1e-15));
        assert!(close(r.risk_w, 0.09, 1e-15));
        assert!(close(r.residual, 0.0, 1e-15));

        let flipped = scalar_task(0.0, 0.0, 1.0, -0.5, 1.0);
        let r = regret(&flipped, &t).unwrap();
        assert!(close(r.regret, 1.69, 1e-14));
        assert!(close(r.risk_w, 0.09, 1e-15));
        assert!(close(r.residual, 1.60, 1e-14));
        let by_loss = expected_loss(&optimal_linear_model(&flipped).unwrap(), &t).unwrap()
            - expected_loss(&optimal_linear_model(&t).unwrap(), &t).unwrap();
        assert!(close(r.regret, by_loss, 1e-12));
    }

    #[test]
    fn identical_tasks_zero_everything() {
        let s = scalar_task(0.3, -0.2, 1.5, 0.4, 2.0);
        assert_eq!(output_risk_kl(&s, &s).unwrap(), RiskDecomposition::ZERO);
        assert_eq!(output_risk_w(&s, &s).unwrap(), RiskDecomposition::ZERO);
        let r = regret(&s, &s).unwrap();
        assert_eq!((r.regret, r.risk_w, r.residual), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mean_shift_only() {
        let s = scalar_task(0.0, 0.0, 1.0, 0.5, 1.0);
        let t = scalar_task(0.0, 1.0, 1.0, 0.5, 1.0);
        let kl = output_risk_kl(&s, &t).unwrap();
        assert_eq!(kl.variance_term, 0.0);
        assert!(close(kl.bias_term, 1.0 / (2.0 * 0.25), 1e-15));
        let w = output_risk_w(&s, &t).unwrap();
        assert_eq!((w.variance_term, w.bias_term, w.total), (0.0, 1.0, 1.0));
    }

    #[test]
    fn zero_pretrained_signal_is_an_error() {
        let s = scalar_task(0.0, 0.0, 1.0, 0.0, 1.0);
        let t = scalar_task(0.0, 0.0, 1.0, 0.8, 1.0);
        assert!(matches!(
            output_risk_kl(&s, &t),
            Err(GaussianError::ZeroPretrainedSignal(_))
        ));
        // W2 stays finite.
        assert!(close(output_risk_w(&s, &t).unwrap().total, 0.64, 1e-15));
    }

    #[test]
    fn vector_output_rejected() {
        let t = GaussianTask::new(
            vec![0.0],
            vec![0.0, 0.0],
            SymMatrix::scalar(1.0),
            Matrix::from_vec(1, 2, vec![0.1, 0.2]).unwrap(),
            SymMatrix::identity(2),
        )
        .unwrap();
        assert!(matches!(
            regret(&t, &t),
            Err(GaussianError::ScalarOutputRequired(2))
        ));
    }

    fn task_strategy(d: usize) -> impl Strategy<Value = GaussianTask> {
        let n = d + 1;
        (
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-1.0f64..1.0, n),
        )
            .prop_map(move |(a, mu)| {
                let a = Matrix::from_vec(n, n, a).unwrap();
                let cov = SymMatrix::identity(n)
                    .scale(0.1)
                    .add(&SymMatrix::from_matrix(&a.matmul(&a.transpose()).unwrap()).unwrap())
                    .unwrap();
                let dist = GaussianDist::new(mu, cov).unwrap();
                GaussianTask::from_joint(&dist, d).unwrap()
            })
    }

    fn task_pair() -> impl Strategy<Value = (GaussianTask, GaussianTask)> {
        (1usize..=4).prop_flat_map(|d| (task_strategy(d), task_strategy(d)))
    }

    proptest! {
        #[test]
        fn regret_identity_and_lower_bound((s, t) in task_pair()) {
            let r = regret(&s, &t).unwrap();
            prop_assert!(r.risk_w <= r.regret + 1e-9);
            prop_assert!((r.regret - r.risk_w - r.residual).abs() <= 1e-9 * r.regret.max(1.0));
            let w = output_risk_w(&s, &t).unwrap();
            prop_assert!((w.total - r.risk_w).abs() <= 1e-12 * w.total.max(1.0));
        }

        #[test]
        fn totals_match_divergences_of_pushforwards((s, t) in task_pair()) {
            let (p_t, p_st) = predictive_laws(&s, &t).unwrap();
            let (p_t, p_st) = (p_t.as_1d().unwrap(), p_st.as_1d().unwrap());
            let w = output_risk_w(&s, &t).unwrap();
            prop_assert!((w.total - w2sq_gaussian_1d(p_st, p_t)).abs() <= 1e-10 * w.total.max(1.0));
            let kl = output_risk_kl(&s, &t).unwrap();
            prop_assert!((kl.total - kl_gaussian_1d(p_t, p_st)).abs() <= 1e-10 * kl.total.max(1.0));
        }

        #[test]
        fn regret_equals_loss_gap((s, t) in task_pair()) {
            let r = regret(&s, &t).unwrap();
            let gap = expected_loss(&optimal_linear_model(&s).unwrap(), &t).unwrap()
                - expected_loss(&optimal_linear_model(&t).unwrap(), &t).unwrap();
            prop_assert!((r.regret - gap).abs() <= 1e-9 * r.regret.max(1.0));
        }

        #[test]
        fn optimal_model_beats_perturbations(t in task_strategy(3), dw in prop::collection::vec(-0.5f64..0.5, 3), db in -0.5f64..0.5) {
            let opt = optimal_linear_model(&t).unwrap();
            let w: Vec<f64> = opt.weights(0).iter().zip(&dw).map(|(a, b)| a + b).collect();
            let other = LinearModel::scalar(&w, opt.b()[0] + db).unwrap();
            prop_assert!(expected_loss(&opt, &t).unwrap() <= expected_loss(&other, &t).unwrap() + 1e-12);
        }
    }
}
