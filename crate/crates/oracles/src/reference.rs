use nalgebra::{DMatrix, DVector};

/// Classical RK4 on `ẋ = A x + b·input` with the input frozen, `steps`
/// uniform steps over `dt`.
pub fn rk4_hold(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    input: f64,
    dt: f64,
    steps: usize,
) -> DVector<f64> {
    let h = dt / steps as f64;
    let f = |x: &DVector<f64>| a * x + b * input;
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (h / 2.0)));
        let k3 = f(&(&x + &k2 * (h / 2.0)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Outputs `c·x_i` for `i = 0..inputs.len()` of `x⁺ = A x + b·input`.
pub fn simulate_outputs(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    x0: &DVector<f64>,
    inputs: &[f64],
) -> Vec<f64> {
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(inputs.len());
    for &u in inputs {
        out.push(c.dot(&x));
        x = a * &x + b * u;
    }
    out
}

/// Minimizer of `½ξᵀHξ + fᵀξ` subject to `C ξ + d = 0`, with multipliers
/// `λ` of the Lagrangian `½ξᵀHξ + fᵀξ + λᵀ(Cξ + d)`.
pub fn equality_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (h.nrows(), c.nrows());
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    kkt.view_mut((0, n), (n, m)).copy_from(&c.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(c);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-f));
    rhs.rows_mut(n, m).copy_from(&(-d));
    let sol = kkt.lu().solve(&rhs)?;
    Some((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
}

/// Two-sided constraint `lower ≤ a·u ≤ upper`.
#[derive(Debug, Clone)]
pub struct TwoSided {
    pub a: DVector<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct EnumerationResult {
    pub u: DVector<f64>,
    pub objective: f64,
    /// Active constraint indices with `+1` (upper) or `−1` (lower).
    pub active: Vec<(usize, i8)>,
    pub candidates: usize,
}

/// Exhaustive active-set search for `min ½uᵀHu + fᵀu` under two-sided
/// constraints, trying every active set of at most `dim(u)` rows (each at
/// its lower or upper side). Returns the best KKT point that is primal
/// feasible and has correctly signed multipliers.
pub fn enumerate_active_sets(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    rows: &[TwoSided],
    tol: f64,
) -> Option<EnumerationResult> {
    let mut best: Option<EnumerationResult> = None;
    let mut candidates = 0;
    let mut chosen: Vec<(usize, i8)> = Vec::with_capacity(h.nrows());

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        start: usize,
        h: &DMatrix<f64>,
        f: &DVector<f64>,
        rows: &[TwoSided],
        tol: f64,
        chosen: &mut Vec<(usize, i8)>,
        best: &mut Option<EnumerationResult>,
        candidates: &mut usize,
    ) {
        *candidates += 1;
        if let Some(cand) = solve_active(h, f, rows, chosen, tol) {
            if best.as_ref().is_none_or(|b| cand.0 < b.objective - 1e-14) {
                *best = Some(EnumerationResult {
                    u: cand.1,
                    objective: cand.0,
                    active: chosen.clone(),
                    candidates: 0,
                });
            }
        }
        if chosen.len() == h.nrows() {
            return;
        }
        for i in start..rows.len() {
            for side in [1i8, -1] {
                chosen.push((i, side));
                recurse(i + 1, h, f, rows, tol, chosen, best, candidates);
                chosen.pop();
            }
        }
    }

    recurse(0, h, f, rows, tol, &mut chosen, &mut best, &mut candidates);
    best.map(|mut b| {
        b.candidates = candidates;
        b
    })
}

fn solve_active(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    rows: &[TwoSided],
    active: &[(usize, i8)],
    tol: f64,
) -> Option<(f64, DVector<f64>)> {
    let n = h.nrows();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-f));
    for (j, &(i, side)) in active.iter().enumerate() {
        let a = &rows[i].a;
        for c in 0..n {
            kkt[(c, n + j)] = a[c];
            kkt[(n + j, c)] = a[c];
        }
        rhs[n + j] = if side > 0 {
            rows[i].upper
        } else {
            rows[i].lower
        };
    }
    let lu = kkt.lu();
    if lu.determinant().abs() < 1e-300 {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    let u = sol.rows(0, n).into_owned();
    // stationarity: H u + f + Σ a_i μ_i = 0 with μ ≥ 0 on upper, μ ≤ 0 on lower
    for (j, &(_, side)) in active.iter().enumerate() {
        let mu = sol[n + j];
        if (side > 0 && mu < -tol) || (side < 0 && mu > tol) {
            return None;
        }
    }
    for row in rows {
        let val = row.a.dot(&u);
        if val > row.upper + tol || val < row.lower - tol {
            return None;
        }
    }
    let objective = 0.5 * u.dot(&(h * &u)) + f.dot(&u);
    Some((objective, u))
}

/// Largest average power a load can draw from a 1-DoF oscillator with
/// mechanical damping `c` under a sinusoidal force of amplitude `f`: the
/// matched load `c` at resonance, `f² / (8c)`.
pub fn resonant_max_power(force_amplitude: f64, damping: f64) -> f64 {
    force_amplitude * force_amplitude / (8.0 * damping)
}
