//! Single-iteration projected feedback-linearized constrained solver.
//!
//! One call to [`SolverGains::step`] performs one projected update of the
//! condensed problem with an integral state on the equality residual. All
//! matrices are fixed offline by [`design_gains`].

mod gains;
mod iteration;

pub use gains::{
    design_gains, orthonormal_complement, ContractionCertificate, DesignOptions, SolverGains,
};
pub(crate) use iteration::shift_blocks;
pub use iteration::{Convergence, FlopCounter, KktReport, SolverState};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condense::{
        build_condensed, build_prediction, compute_offset, Bounds, Interval, WeightPolicy,
    };
    use crate::linalg::spectral_norm;
    use crate::model::{make_benchmark_plant, zoh_discretize, BenchmarkParams, Radiation};
    use nalgebra::{DMatrix, DVector};

    fn problem(horizon: usize, radiation: bool) -> crate::condense::CondensedProblem {
        let params = BenchmarkParams {
            mass: 2.0,
            stiffness: 40.0,
            damping: 1.5,
            radiation: radiation.then_some(Radiation {
                gain: 3.0,
                pole: -2.0,
            }),
        };
        let plant = zoh_discretize(&make_benchmark_plant(&params).unwrap(), 0.1).unwrap();
        let ops = build_prediction(&plant, horizon).unwrap();
        let bounds = Bounds {
            u: Interval::symmetric(5.0),
            p: Interval::symmetric(0.5),
            v: Interval::symmetric(2.0),
        };
        build_condensed(ops, bounds, 0.0, WeightPolicy::AutoRaise).unwrap()
    }

    #[test]
    fn complement_of_coordinate_pattern() {
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let perp = orthonormal_complement(&c).unwrap();
        assert_eq!(perp.shape(), (1, 3));
        assert!((perp[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!(perp[(0, 1)].abs() < 1e-15 && perp[(0, 2)].abs() < 1e-15);
    }

    #[test]
    fn complement_spans_lifted_inputs() {
        let p = problem(6, true);
        let perp = orthonormal_complement(&p.ceq).unwrap();
        let nh = 6;
        assert!((&perp * p.ceq.transpose()).amax() < 1e-12);
        assert!((&perp * perp.transpose() - DMatrix::identity(nh, nh)).amax() < 1e-12);
        for j in 0..nh {
            let mut dir = DVector::zeros(3 * nh);
            dir[j] = 1.0;
            for i in 0..nh {
                dir[nh + i] = p.ops.cup[(i, j)];
                dir[2 * nh + i] = p.ops.cuv[(i, j)];
            }
            let back = perp.transpose() * (&perp * &dir);
            assert!((back - dir).norm() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_rows_rejected() {
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 2.0, 0.0]);
        assert!(matches!(
            orthonormal_complement(&c),
            Err(crate::Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn gains_match_closed_forms() {
        let p = problem(5, true);
        let g = design_gains(&p, &DesignOptions::default()).unwrap();
        assert!(g.kp > 0.0 && g.ki > 0.0);
        assert!((g.kp * g.kp - 4.0 * g.ki).abs() < 1e-9 * g.ki);
        assert!((g.tau * g.tmt_norm - 0.99).abs() < 1e-12);

        let dim = 15;
        let c = &p.ceq;
        let c_pinv = c.transpose() * (c * c.transpose()).try_inverse().unwrap();
        let proj = &c_pinv * c;
        let id = DMatrix::<f64>::identity(dim, dim);
        let g1 = &id - (&id - &proj) * &p.h * g.tau - &proj * (g.tau * g.kp);
        assert!((&g1 - &g.g1).amax() < 1e-12);
        assert!((&c_pinv * (-g.tau * g.ki) - &g.g2).amax() < 1e-12);
        assert!((&c_pinv * (-g.kp) - &g.g3).amax() < 1e-12);
        assert!((c * g.tau - &g.g4).amax() < 1e-12);
        assert!(((&id - &proj) * &p.f * -g.tau - &g.g).amax() < 1e-12);
    }

    #[test]
    fn weighted_certificate_bounds_the_linear_map() {
        for &(nh, rad) in &[(3, false), (5, true), (8, true)] {
            let p = problem(nh, rad);
            let g = design_gains(&p, &DesignOptions::default()).unwrap();
            let w = g.certificate.weight_matrix();
            let w_inv = w.clone().try_inverse().unwrap();
            let weighted = spectral_norm(&(&w * g.linear_map() * &w_inv));
            assert!(g.rho_bound < 1.0);
            assert!(
                weighted <= g.rho_bound + 1e-9,
                "N={nh}: {weighted} > {}",
                g.rho_bound
            );
            assert!(g.euclidean_step_norm.unwrap() >= 1.0 - 1e-12);

            let xi = DVector::from_fn(3 * nh, |i, _| (i as f64 * 0.7).sin());
            let z = DVector::from_fn(2 * nh, |i, _| (i as f64 * 1.3).cos());
            let mut stacked = DVector::zeros(5 * nh);
            stacked.rows_mut(0, 3 * nh).copy_from(&xi);
            stacked.rows_mut(3 * nh, 2 * nh).copy_from(&z);
            let direct = (&w * stacked).norm();
            assert!((g.certificate.weighted_norm(&xi, &z) - direct).abs() < 1e-9 * direct);
        }
    }

    #[test]
    fn step_counts_table_entries() {
        let nh = 7;
        let p = problem(nh, true);
        let g = design_gains(&p, &DesignOptions::default()).unwrap();
        let state = SolverState::cold_start(&g);
        let x = DVector::from_element(4, 0.1);
        let w = DVector::from_element(nh, 0.2);
        let mut counter = FlopCounter::default();
        let d_til = g.scaled_offset(&x, &w, &mut counter);
        assert_eq!(counter.multiplications, (2 * nh * (4 + nh)) as u64);
        let next = g.step_counted(&state, &d_til, &mut counter).unwrap();
        let expected = 2 * nh * (4 + nh) + 23 * nh * nh + 2 * nh;
        assert_eq!(counter.multiplications, expected as u64);
        assert!(next.within_bounds(&g.lb, &g.ub));

        let d = compute_offset(&p, &x, &w).unwrap();
        assert!((&d * g.tau - &d_til).amax() < 1e-14);
        let z_ref = &state.z + &g.g4 * &state.xi + &d_til;
        assert!((z_ref - &next.z).amax() < 1e-12);
    }

    #[test]
    fn non_finite_state_rejected() {
        let p = problem(3, false);
        let g = design_gains(&p, &DesignOptions::default()).unwrap();
        let mut s = SolverState::cold_start(&g);
        s.z[1] = f64::NAN;
        assert!(matches!(
            g.step(&s, &DVector::zeros(6)),
            Err(crate::Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_data_gives_zero_multipliers() {
        let p = problem(4, false);
        let g = design_gains(&p, &DesignOptions::default()).unwrap();
        let l = g.recover_multipliers(
            &p,
            &DVector::zeros(12),
            &DVector::zeros(8),
            &DVector::zeros(8),
        );
        assert!(l.amax() == 0.0);
    }

    #[test]
    fn shift_moves_blocks_forward() {
        let p = problem(3, false);
        let g = design_gains(&p, &DesignOptions::default()).unwrap();
        let mut s = SolverState {
            xi: DVector::from_row_slice(&[1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 1.1, 1.2, 1.3]),
            z: DVector::from_row_slice(&[4.0, 5.0, 6.0, 7.0, 8.0, 9.0]),
        };
        s.shift(&g);
        assert_eq!(
            s.xi.as_slice(),
            &[2.0, 3.0, 3.0, 0.2, 0.3, 0.3, 1.2, 1.3, 1.3]
        );
        assert_eq!(s.z.as_slice(), &[5.0, 6.0, 6.0, 8.0, 9.0, 9.0]);
    }

    #[test]
    fn early_exit_when_tolerance_is_loose() {
        let p = problem(3, false);
        let g = design_gains(&p, &DesignOptions::default()).unwrap();
        let init = SolverState::cold_start(&g);
        let out = g
            .solve_to_convergence(&p, &DVector::zeros(2), &DVector::zeros(3), &init, 1e6, 100)
            .unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
    }
}
