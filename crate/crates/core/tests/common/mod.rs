use guided_phonon::dynamics::ModeState;
use guided_phonon::model::{MechanicalCavityMode, WaveguideModeComb};
use guided_phonon::scalar::Complex;

type C = Complex<f64>;

/// Right-hand side of the mode equations in a frame rotating at `omega_m`, time in ns.
pub fn rhs(m: &MechanicalCavityMode<f64>, comb: &WaveguideModeComb<f64>, x: &[C]) -> Vec<C> {
    let i = C::new(0.0, 1.0);
    let ns = 1e-9;
    let mut dx = vec![C::new(0.0, 0.0); x.len()];
    dx[0] = -0.5 * m.gamma_m * ns * x[0];
    for (l, mode) in comb.modes().iter().enumerate() {
        let c = x[l + 1];
        dx[0] -= i * mode.coupling * ns * c;
        dx[l + 1] = -i * (mode.omega - m.omega_m) * ns * c - i * mode.coupling * ns * x[0] - 0.5 * mode.linewidth * ns * c;
    }
    dx
}

pub fn rk4(m: &MechanicalCavityMode<f64>, comb: &WaveguideModeComb<f64>, x0: Vec<C>, h: f64, steps: usize) -> Vec<C> {
    let axpy = |x: &[C], k: &[C], a: f64| -> Vec<C> { x.iter().zip(k).map(|(x, k)| x + k * a).collect() };
    let mut x = x0;
    for _ in 0..steps {
        let k1 = rhs(m, comb, &x);
        let k2 = rhs(m, comb, &axpy(&x, &k1, h / 2.0));
        let k3 = rhs(m, comb, &axpy(&x, &k2, h / 2.0));
        let k4 = rhs(m, comb, &axpy(&x, &k3, h));
        for j in 0..x.len() {
            x[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
        }
    }
    x
}

pub fn as_vec(s: &ModeState<f64>) -> Vec<C> {
    std::iter::once(s.b).chain(s.c.iter().copied()).collect()
}
