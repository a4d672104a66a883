//! Pathwise and ensemble verification of the a-priori estimates: the
//! weighted energy inequality with its noise-forcing constant, the weighted
//! Poincare inequality, exceedance frequencies, and continuity in the
//! initial condition.

use crate::error::{LabError, Result};
use crate::solver::{
    damping_margin, simulate_path, SimulationConfig, SolutionPath, EPS2, EPS3, EPS4,
};
use crate::weighted_space::{weighted_norm, GridFunction, WeightFunction};

/// Working Poincare constant (2 - mhat^2)/4 for the exponential weight
/// e^{mhat |x|}, valid for 0 <= mhat < sqrt(2). This is the explicit
/// bounded-region constant; it is conservative for narrow functions and is
/// the reference constant used by every damping threshold.
pub fn poincare_constant(mhat: f64) -> Result<f64> {
    if !(mhat >= 0.0) || mhat >= std::f64::consts::SQRT_2 {
        return Err(LabError::Domain(format!(
            "Poincare constant needs 0 <= mhat < sqrt(2), got {mhat}"
        )));
    }
    Ok((2.0 - mhat * mhat) / 4.0)
}

#[derive(Debug, Clone, Copy)]
pub struct PoincareReport {
    /// int |u_x|^2 rhohat dx by central differences.
    pub lhs: f64,
    /// C~ int |u|^2 rhohat dx.
    pub rhs: f64,
    pub holds: bool,
}

/// Check the weighted Poincare inequality for a compactly supported grid
/// function. The support must stay clear of the domain boundary (two nodes
/// on each side) so the central differences see the whole function.
pub fn poincare_check(u: &GridFunction, mhat: f64) -> Result<PoincareReport> {
    let c_tilde = poincare_constant(mhat)?;
    let n = u.grid.nx;
    if u.values[0] != 0.0
        || u.values[1] != 0.0
        || u.values[n - 1] != 0.0
        || u.values[n - 2] != 0.0
    {
        return Err(LabError::InvalidInput(
            "poincare_check: support touches the domain boundary".into(),
        ));
    }
    // mhat = 0 degenerates to the unweighted inequality.
    let weight = |x: f64| (mhat * x.abs()).exp();
    let dx = u.grid.dx;
    let mut lhs = 0.0;
    let mut mass = 0.0;
    for j in 1..n - 1 {
        let ux = (u.values[j + 1] - u.values[j - 1]) / (2.0 * dx);
        let w = weight(u.grid.x(j));
        lhs += ux * ux * w * dx;
        mass += u.values[j] * u.values[j] * w * dx;
    }
    let rhs = c_tilde * mass;
    Ok(PoincareReport {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

/// Aggregated noise forcing in the energy inequality:
///
///   (4k/(3 e2^2) + 2 C*/(3 e3^2)) sup ||eta||_{3,rho}^3
///   + (C*/2 + 1 + k) sup ||eta||_{4,rho}^4
///   + 4/(3 e4^2) sup ||eta||_{6,rho}^6
///
/// under the global epsilon policy. Requires the path to carry p-norm
/// records in the solution weight.
pub fn energy_forcing(eta_path: &SolutionPath, k: f64, cstar: f64) -> Result<f64> {
    let p = eta_path
        .pnorms
        .as_ref()
        .ok_or_else(|| LabError::Config("energy_forcing: path carries no p-norm records".into()))?;
    let sup = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    let s3 = sup(&p.p3_rho).powi(3);
    let s4 = sup(&p.p4_rho).powi(4);
    let s6 = sup(&p.p6_rho).powi(6);
    Ok(
        (4.0 * k / (3.0 * EPS2 * EPS2) + 2.0 * cstar / (3.0 * EPS3 * EPS3)) * s3
            + (cstar / 2.0 + 1.0 + k) * s4
            + 4.0 / (3.0 * EPS4 * EPS4) * s6,
    )
}

/// Pathwise energy-inequality report: per-step left side ||v(t)||^2 and
/// right side (||u0||^2 + t F) e^{t (2 C*^2/3 + C*/2 + k)} where F is the
/// forcing constant and v = u - eta.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub forcing: f64,
    pub holds: bool,
    /// Worst ratio lhs/rhs over the horizon.
    pub slack: f64,
}

pub fn energy_bound_check(
    u_path: &SolutionPath,
    eta_path: &SolutionPath,
    c: &SimulationConfig,
    slack_factor: f64,
) -> Result<EnergyReport> {
    if u_path.grid != eta_path.grid || u_path.states.len() != eta_path.states.len() {
        return Err(LabError::Config(
            "energy_bound_check: paths live on different axes".into(),
        ));
    }
    if u_path.states.is_empty() {
        return Err(LabError::Config(
            "energy_bound_check: paths carry no states".into(),
        ));
    }
    let cstar = c.weight.cstar;
    let k = c.damping;
    let forcing = energy_forcing(eta_path, k, cstar)?;
    let u0_sq = weighted_norm(&u_path.states[0], 2.0, &c.weight)?.powi(2);
    let rate = 2.0 * cstar * cstar / 3.0 + cstar / 2.0 + k;

    let mut lhs = Vec::with_capacity(u_path.states.len());
    let mut rhs = Vec::with_capacity(u_path.states.len());
    let mut slack: f64 = 0.0;
    let mut holds = true;
    for (n, (us, es)) in u_path.states.iter().zip(&eta_path.states).enumerate() {
        let t = u_path.grid.time(n);
        let v = us.sub(es)?;
        let left = weighted_norm(&v, 2.0, &c.weight)?.powi(2);
        let right = (u0_sq + t * forcing) * (t * rate).exp();
        if left > slack_factor * right && !(left == 0.0 && right == 0.0) {
            holds = false;
        }
        if right > 0.0 {
            slack = slack.max(left / right);
        } else if left > 0.0 {
            slack = f64::INFINITY;
            holds = false;
        }
        lhs.push(left);
        rhs.push(right);
    }
    Ok(EnergyReport {
        lhs,
        rhs,
        forcing,
        holds,
        slack,
    })
}

/// Time-and-ensemble average of the indicator ||u(t)||_{2,rhohat} > R.
#[derive(Debug, Clone, Copy)]
pub struct ExceedanceStat {
    pub radius: f64,
    pub horizon: f64,
    pub frequency: f64,
}

pub fn exceedance_stat(paths: &[SolutionPath], radius: f64) -> ExceedanceStat {
    let mut over = 0usize;
    let mut total = 0usize;
    let mut horizon = 0.0f64;
    for p in paths {
        horizon = horizon.max(p.grid.t_final);
        for &n in &p.norms_2rhohat {
            if n > radius {
                over += 1;
            }
            total += 1;
        }
    }
    ExceedanceStat {
        radius,
        horizon,
        frequency: if total == 0 {
            0.0
        } else {
            over as f64 / total as f64
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SensitivityReport {
    /// E ||u1 - u2||^2_{2,rho} at the stopped time over ||u01 - u02||^2.
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
}

/// Run paired paths from two initial conditions under identical noise, stop
/// each pair at the first passage over `radius` (in the solution weight),
/// and report the mean squared gap relative to the initial gap.
pub fn initial_condition_sensitivity(
    c: &SimulationConfig,
    u01: &GridFunction,
    u02: &GridFunction,
    radius: f64,
    ensemble: usize,
) -> Result<SensitivityReport> {
    let gap0 = u01.sub(u02)?;
    let denominator = weighted_norm(&gap0, 2.0, &c.weight)?.powi(2);
    let mut acc = 0.0;
    for i in 0..ensemble.max(1) {
        let seed = c.seed.wrapping_add(i as u64);
        let mut c1 = c.clone();
        c1.u0 = u01.clone();
        c1.seed = seed;
        let mut c2 = c.clone();
        c2.u0 = u02.clone();
        c2.seed = seed;
        let p1 = simulate_path(&c1)?;
        let p2 = simulate_path(&c2)?;
        let passage = |p: &SolutionPath| {
            p.norms_2rho
                .iter()
                .position(|&n| n >= radius)
                .unwrap_or(p.states.len() - 1)
        };
        let stop = passage(&p1).min(passage(&p2));
        let gap = p1.states[stop].sub(&p2.states[stop])?;
        acc += weighted_norm(&gap, 2.0, &c.weight)?.powi(2);
    }
    let numerator = acc / ensemble.max(1) as f64;
    Ok(SensitivityReport {
        ratio: if denominator > 0.0 {
            numerator / denominator
        } else if numerator == 0.0 {
            0.0
        } else {
            f64::INFINITY
        },
        numerator,
        denominator,
    })
}

/// The damping floor k >= cstar/3 + delta under the epsilon policy; exposed
/// for reports.
pub fn damping_floor(cstar: f64, k: f64) -> f64 {
    cstar / 3.0 + damping_margin(cstar, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{SigmaCoefficient, SigmaKind};
    use crate::solver::PathPNorms;
    use crate::weighted_space::SpaceTimeGrid;

    fn grid(nx: usize, horizon: f64) -> SpaceTimeGrid {
        let l = 20.0;
        let dx = 2.0 * l / (nx as f64 - 1.0);
        SpaceTimeGrid::new(l, nx, dx * dx / 2.0, horizon).unwrap()
    }

    #[test]
    fn poincare_constant_values() {
        assert!((poincare_constant(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((poincare_constant(0.2).unwrap() - 0.49).abs() < 1e-15);
        assert!(poincare_constant(std::f64::consts::SQRT_2).is_err());
        assert!(poincare_constant(-0.1).is_err());
        assert!(poincare_constant(f64::NAN).is_err());
    }

    #[test]
    fn poincare_zero_function() {
        let g = grid(129, 0.5);
        let u = GridFunction::zeros(g);
        let rep = poincare_check(&u, 0.2).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn poincare_scaling_and_reflection_invariance() {
        let g = grid(401, 0.5);
        let bump = |x: f64| {
            let s: f64 = 0.6;
            let c = 2.5;
            let cutoff = if (x - c).abs() < 6.0 {
                (1.0 - ((x - c) / 6.0).powi(2)).powi(2)
            } else {
                0.0
            };
            (-(x - c) * (x - c) / (2.0 * s * s)).exp() * cutoff
        };
        let u = GridFunction::from_fn(g, bump);
        let base = poincare_check(&u, 0.2).unwrap();
        let scaled = poincare_check(&u.scale(-3.0), 0.2).unwrap();
        assert_eq!(base.holds, scaled.holds);
        assert!((scaled.lhs - 9.0 * base.lhs).abs() < 1e-9 * scaled.lhs.max(1.0));
        assert!((scaled.rhs - 9.0 * base.rhs).abs() < 1e-9 * scaled.rhs.max(1.0));

        let reflected = GridFunction::from_fn(g, |x| bump(-x));
        let refl = poincare_check(&reflected, 0.2).unwrap();
        assert_eq!(base.holds, refl.holds);
    }

    #[test]
    fn poincare_random_bumps_hold() {
        let g = grid(801, 0.5);
        let mut violations = 0;
        for i in 0..100u64 {
            let r = |salt: u64| {
                crate::noise::splitmix64(i ^ salt.wrapping_mul(0x9E37)) as f64
                    / u64::MAX as f64
            };
            let center = -5.0 + 10.0 * r(1);
            let width = 0.3 + 0.6 * r(2);
            let amp = 0.1 + 1.9 * r(3);
            let u = GridFunction::from_fn(g, |x| {
                let z = (x - center) / width;
                let cut = x - center;
                let cutoff = if cut.abs() < 8.0 * width {
                    (1.0 - (cut / (8.0 * width)).powi(2)).powi(2)
                } else {
                    0.0
                };
                amp * (-z * z / 2.0).exp() * cutoff
            });
            let rep = poincare_check(&u, 0.2).unwrap();
            if !rep.holds {
                violations += 1;
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn poincare_rejects_boundary_support() {
        let g = grid(129, 0.5);
        let u = GridFunction::from_fn(g, |_| 1.0);
        assert!(poincare_check(&u, 0.2).is_err());
    }

    fn synthetic_eta(grid: SpaceTimeGrid, s3: f64, s4: f64, s6: f64) -> SolutionPath {
        SolutionPath {
            grid,
            seed: 0,
            states: vec![GridFunction::zeros(grid)],
            norms_2rho: vec![0.0],
            norms_2rhohat: vec![0.0],
            pnorms: Some(PathPNorms {
                p3_rho: vec![s3],
                p4_rho: vec![s4],
                p6_rho: vec![s6],
                p3_rhohat: vec![s3],
                p4_rhohat: vec![s4],
                p6_rhohat: vec![s6],
            }),
            tau_step: None,
        }
    }

    #[test]
    fn forcing_zero_for_zero_noise() {
        let g = grid(65, 0.25);
        let eta = synthetic_eta(g, 0.0, 0.0, 0.0);
        assert_eq!(energy_forcing(&eta, 6.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn forcing_hand_arithmetic() {
        let g = grid(65, 0.25);
        let eta = synthetic_eta(g, 1.0, 1.0, 1.0);
        let k = 6.0;
        let cstar = 0.1;
        let expected = (4.0 * k / (3.0 * 1e-4) + 2.0 * cstar / (3.0 * 1e-4))
            + (cstar / 2.0 + 1.0 + k)
            + 4.0 / (3.0 * 1e-4);
        let got = energy_forcing(&eta, k, cstar).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
    }

    #[test]
    fn forcing_homogeneity_under_doubling() {
        let g = grid(65, 0.25);
        let base = synthetic_eta(g, 1.0, 1.0, 1.0);
        let doubled = synthetic_eta(g, 2.0, 2.0, 2.0);
        let k = 6.0;
        let cstar = 0.1;
        // Term-by-term: cubes scale by 8, fourth powers by 16, sixth by 64.
        let t3 = 4.0 * k / (3.0 * 1e-4) + 2.0 * cstar / (3.0 * 1e-4);
        let t4 = cstar / 2.0 + 1.0 + k;
        let t6 = 4.0 / (3.0 * 1e-4);
        let expected = 8.0 * t3 + 16.0 * t4 + 64.0 * t6;
        let got = energy_forcing(&doubled, k, cstar).unwrap();
        let base_val = energy_forcing(&base, k, cstar).unwrap();
        assert!((base_val - (t3 + t4 + t6)).abs() < 1e-9 * base_val);
        assert!((got - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn forcing_requires_pnorm_records() {
        let g = grid(65, 0.25);
        let mut eta = synthetic_eta(g, 0.0, 0.0, 0.0);
        eta.pnorms = None;
        assert!(matches!(
            energy_forcing(&eta, 1.0, 0.1),
            Err(LabError::Config(_))
        ));
    }

    fn deterministic_config(nx: usize, horizon: f64) -> SimulationConfig {
        let g = grid(nx, horizon);
        SimulationConfig {
            grid: g,
            damping: 6.0,
            weight: WeightFunction::exponential(0.1).unwrap(),
            weight_hat: WeightFunction::exponential(0.2).unwrap(),
            sigma: SigmaCoefficient::new(SigmaKind::ConstantZero, 1.0).unwrap(),
            u0: GridFunction::from_fn(g, |x| (-x * x / 2.0).exp()),
            truncation_radius: None,
            flux_enabled: true,
            seed: 9,
        }
    }

    #[test]
    fn energy_bound_deterministic_run() {
        let c = deterministic_config(129, 1.0);
        let u_path = simulate_path(&c).unwrap();
        // Zero noise: eta is identically zero.
        let mut eta = SolutionPath::from_states(
            c.grid,
            c.seed,
            vec![GridFunction::zeros(c.grid); u_path.states.len()],
            &c.weight,
            &c.weight_hat,
        )
        .unwrap();
        eta.pnorms = Some(PathPNorms {
            p3_rho: vec![0.0; u_path.states.len()],
            p4_rho: vec![0.0; u_path.states.len()],
            p6_rho: vec![0.0; u_path.states.len()],
            p3_rhohat: vec![0.0; u_path.states.len()],
            p4_rhohat: vec![0.0; u_path.states.len()],
            p6_rhohat: vec![0.0; u_path.states.len()],
        });
        let rep = energy_bound_check(&u_path, &eta, &c, 2.0).unwrap();
        assert!(rep.holds, "slack {}", rep.slack);
        assert_eq!(rep.forcing, 0.0);
        // Left side at t = 0 equals ||u0||^2 exactly; right side matches.
        assert!((rep.lhs[0] - rep.rhs[0]).abs() < 1e-12 * rep.rhs[0]);
        // Damped deterministic dynamics: the right side grows, the left
        // decays, so slack stays at its t = 0 value of one.
        assert!(rep.slack <= 1.0 + 1e-12);
        // Right side monotone nondecreasing.
        for w in rep.rhs.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn energy_bound_zero_everything() {
        let mut c = deterministic_config(65, 0.25);
        c.u0 = GridFunction::zeros(c.grid);
        let u_path = simulate_path(&c).unwrap();
        let mut eta = SolutionPath::from_states(
            c.grid,
            c.seed,
            vec![GridFunction::zeros(c.grid); u_path.states.len()],
            &c.weight,
            &c.weight_hat,
        )
        .unwrap();
        let n = u_path.states.len();
        eta.pnorms = Some(PathPNorms {
            p3_rho: vec![0.0; n],
            p4_rho: vec![0.0; n],
            p6_rho: vec![0.0; n],
            p3_rhohat: vec![0.0; n],
            p4_rhohat: vec![0.0; n],
            p6_rhohat: vec![0.0; n],
        });
        let rep = energy_bound_check(&u_path, &eta, &c, 2.0).unwrap();
        assert!(rep.holds);
        assert!(rep.lhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exceedance_edges_and_monotonicity() {
        let c = deterministic_config(65, 0.5);
        let path = simulate_path(&c).unwrap();
        let paths = vec![path];
        let zero = exceedance_stat(&paths, 0.0);
        assert!(zero.frequency > 0.9);
        let u0n = paths[0].norms_2rhohat[0];
        let above = exceedance_stat(&paths, u0n * 1.01);
        // Pure damping and diffusion: the norm only decays.
        assert_eq!(above.frequency, 0.0);
        let mut prev = f64::INFINITY;
        for r in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let f = exceedance_stat(&paths, r).frequency;
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn sensitivity_identical_initials() {
        let c = deterministic_config(65, 0.25);
        let rep =
            initial_condition_sensitivity(&c, &c.u0, &c.u0.clone(), 100.0, 2).unwrap();
        assert_eq!(rep.numerator, 0.0);
        assert_eq!(rep.ratio, 0.0);
    }

    #[test]
    fn sensitivity_pure_heat_contraction() {
        let mut c = deterministic_config(201, 0.25);
        c.damping = 0.0;
        c.flux_enabled = false;
        let u01 = GridFunction::from_fn(c.grid, |x| (-x * x / 2.0).exp());
        let u02 = GridFunction::from_fn(c.grid, |x| 1.1 * (-x * x / 2.2).exp());
        let rep = initial_condition_sensitivity(&c, &u01, &u02, 1e9, 1).unwrap();
        let c_rho =
            crate::weighted_space::estimate_weight_constant(&c.weight, c.grid.t_final, &c.grid)
                .unwrap();
        assert!(
            rep.ratio <= c_rho * (1.0 + 1e-9),
            "ratio {} vs weight constant {c_rho}",
            rep.ratio
        );
    }

    #[test]
    fn sensitivity_gap_scaling() {
        let c = deterministic_config(129, 0.25);
        let u01 = GridFunction::from_fn(c.grid, |x| (-x * x / 2.0).exp());
        let eps = 1e-3;
        let bump = GridFunction::from_fn(c.grid, |x| (-(x - 1.0) * (x - 1.0)).exp());
        let gap1 = GridFunction::from_values(
            c.grid,
            u01.values
                .iter()
                .zip(&bump.values)
                .map(|(a, b)| a + eps * b)
                .collect(),
        )
        .unwrap();
        let gap2 = GridFunction::from_values(
            c.grid,
            u01.values
                .iter()
                .zip(&bump.values)
                .map(|(a, b)| a + 2.0 * eps * b)
                .collect(),
        )
        .unwrap();
        let r1 = initial_condition_sensitivity(&c, &u01, &gap1, 1e9, 1).unwrap();
        let r2 = initial_condition_sensitivity(&c, &u01, &gap2, 1e9, 1).unwrap();
        // Numerator scales like the squared gap at linearized order.
        let scale = r2.numerator / r1.numerator;
        assert!((scale - 4.0).abs() < 0.2, "scale {scale}");
        // The ratio itself is stable under the gap scaling.
        assert!((r2.ratio / r1.ratio - 1.0).abs() < 0.05);
    }
}
