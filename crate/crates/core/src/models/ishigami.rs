use std::f64::consts::PI;

pub const ISHIGAMI_A: f64 = 5.0;
pub const ISHIGAMI_B: f64 = 0.1;

/// `sin(x1) + a sin^2(x2) + b x3^4 sin(x1)`.
pub fn ishigami(x: &[f64; 3], a: f64, b: f64) -> f64 {
    let s1 = x[0].sin();
    let s2 = x[1].sin();
    s1 + a * s2 * s2 + b * x[2].powi(4) * s1
}

/// Closed-form total-effect Sobol' indices for inputs `U(-pi, pi)^3`.
pub fn ishigami_sobol_analytic(a: f64, b: f64) -> [f64; 3] {
    let pi4 = PI.powi(4);
    let pi8 = PI.powi(8);
    let d = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
    let v13 = 8.0 * b * b * pi8 / 225.0;
    let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
    [(v1 + v13) / d, (a * a / 8.0) / d, v13 / d]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn point_values() {
        assert_relative_eq!(ishigami(&[PI / 2.0, 0.0, 0.0], 5.0, 0.1), 1.0, max_relative = 1e-15);
        assert_relative_eq!(ishigami(&[0.0, PI / 2.0, 0.0], 5.0, 0.1), 5.0, max_relative = 1e-15);
        assert_relative_eq!(ishigami(&[PI / 2.0, 0.0, PI], 5.0, 0.1), 1.0 + 0.1 * PI.powi(4), max_relative = 1e-14);
        assert_relative_eq!(1.0 + 0.1 * PI.powi(4), 10.7409, epsilon = 1e-4);
    }

    #[test]
    fn analytic_totals() {
        assert_eq!(ishigami_sobol_analytic(5.0, 0.0)[2], 0.0);
        let [s1, s2, s3] = ishigami_sobol_analytic(ISHIGAMI_A, ISHIGAMI_B);
        assert!((s2 - 0.288).abs() < 5e-4, "{s2}");
        assert!(s1 > s3 && s3 > s2);
    }

    // Independent check of the closed form: the variance pieces by quadrature.
    #[test]
    fn analytic_totals_match_quadrature() {
        let (a, b) = (5.0, 0.1);
        let m = 2000;
        let h = 2.0 * PI / m as f64;
        let mid = |k: usize| -PI + (k as f64 + 0.5) * h;
        // E over U(-pi,pi) by midpoint rule
        let mean1 = |f: &dyn Fn(f64) -> f64| (0..m).map(|k| f(mid(k))).sum::<f64>() / m as f64;
        let e_s1sq = mean1(&|x| x.sin().powi(2));
        let e_x34 = mean1(&|x| x.powi(4));
        let e_x38 = mean1(&|x| x.powi(8));
        let e_s2sq = mean1(&|x| x.sin().powi(2));
        let e_s2q = mean1(&|x| x.sin().powi(4));
        let var2 = a * a * (e_s2q - e_s2sq * e_s2sq);
        // f = sin(x1)(1 + b x3^4) + a sin^2(x2): the x1-x3 part has zero mean
        let var13 = e_s1sq * (1.0 + 2.0 * b * e_x34 + b * b * e_x38);
        let total = var13 + var2;
        // S_T2 = var2 / D; S_T3 = E_x1[Var_x3] / D
        let st3 = e_s1sq * b * b * (e_x38 - e_x34 * e_x34) / total;
        // Var over x1 given the rest is Var(sin x1) (1 + b x3^4)^2, averaged over x3
        let st1 = var13 / total;
        let [s1, s2, s3] = ishigami_sobol_analytic(a, b);
        assert_relative_eq!(s2, var2 / total, max_relative = 1e-5);
        assert_relative_eq!(s3, st3, max_relative = 1e-5);
        assert_relative_eq!(s1, st1, max_relative = 1e-5);
    }
}
