use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{DynamicSystem, SystemError};

const STEP_TOLERANCE: f64 = 1e-10;
const MAX_STEP_ITERATIONS: usize = 30;
/// Newton iterations after which a stale Jacobian is refreshed.
const REFRESH_AFTER: usize = 6;
/// Halvings allowed for a step that fails to converge.
const MAX_SPLITS: u32 = 8;

const EQUILIBRIUM_TARGET: f64 = 1e-12;
const EQUILIBRIUM_ACCEPT: f64 = 1e-9;
const MAX_EQUILIBRIUM_ITERATIONS: usize = 40;
const MAX_BACKTRACKS: usize = 12;

fn eval<S: DynamicSystem + ?Sized>(sys: &S, x: &[f64]) -> Result<Vec<f64>, SystemError> {
    let mut dx = vec![0.0; x.len()];
    sys.derivatives(x, &mut dx)?;
    Ok(dx)
}

/// Finite-difference Jacobian of `sys` at `x` with step
/// `max(1e-6, 1e-6·|x_k|)`. Central differences when `central`.
pub(crate) fn finite_difference_jacobian<S: DynamicSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    central: bool,
) -> Result<DMatrix<f64>, SystemError> {
    let n = x.len();
    let f0 = if central { Vec::new() } else { eval(sys, x)? };
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = (1e-6 * x[k].abs()).max(1e-6);
        xp[k] = x[k] + h;
        let fp = eval(sys, &xp)?;
        if central {
            xp[k] = x[k] - h;
            let fm = eval(sys, &xp)?;
            for r in 0..n {
                jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        } else {
            for r in 0..n {
                jac[(r, k)] = (fp[r] - f0[r]) / h;
            }
        }
        xp[k] = x[k];
    }
    Ok(jac)
}

/// Implicit trapezoidal rule with a chord Newton solve. The iteration
/// matrix `I − (dt/2)·J` is reused across steps until convergence slows
/// or `dt` changes.
#[derive(Debug, Default)]
pub struct TrapezoidalIntegrator {
    iteration_matrix: Option<(LU<f64, Dyn, Dyn>, f64)>,
    /// Number of Jacobian evaluations so far.
    pub jacobian_updates: usize,
}

impl TrapezoidalIntegrator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop the cached iteration matrix (after a discrete model change).
    pub fn invalidate(&mut self) {
        self.iteration_matrix = None;
    }

    fn refresh<S: DynamicSystem + ?Sized>(
        &mut self,
        sys: &S,
        x: &[f64],
        dt: f64,
    ) -> Result<(), SystemError> {
        let n = x.len();
        let jac = finite_difference_jacobian(sys, x, false)?;
        let m = DMatrix::identity(n, n) - jac * (0.5 * dt);
        self.iteration_matrix = Some((m.lu(), dt));
        self.jacobian_updates += 1;
        Ok(())
    }

    /// Advance `x` at time `t` by `dt`. A step whose Newton solve fails is
    /// retried as two half steps, down to `dt / 2^MAX_SPLITS`.
    pub fn step<S: DynamicSystem + ?Sized>(
        &mut self,
        sys: &S,
        x0: &[f64],
        t: f64,
        dt: f64,
    ) -> Result<Vec<f64>, SystemError> {
        if !(dt > 0.0) {
            return Err(SystemError::StepDiverged {
                time: t,
                detail: format!("non-positive step {dt}"),
            });
        }
        self.split_step(sys, x0, t, dt, 0)
    }

    fn split_step<S: DynamicSystem + ?Sized>(
        &mut self,
        sys: &S,
        x0: &[f64],
        t: f64,
        dt: f64,
        depth: u32,
    ) -> Result<Vec<f64>, SystemError> {
        match self.newton_step(sys, x0, t, dt) {
            Ok(x) => Ok(x),
            Err(SystemError::StepDiverged { .. }) if depth < MAX_SPLITS => {
                let half = 0.5 * dt;
                let mid = self.split_step(sys, x0, t, half, depth + 1)?;
                self.split_step(sys, &mid, t + half, half, depth + 1)
            }
            Err(e) => Err(e),
        }
    }

    fn newton_step<S: DynamicSystem + ?Sized>(
        &mut self,
        sys: &S,
        x0: &[f64],
        t: f64,
        dt: f64,
    ) -> Result<Vec<f64>, SystemError> {
        let diverged = |detail: String| SystemError::StepDiverged { time: t, detail };
        if !matches!(self.iteration_matrix, Some((_, h)) if h == dt) {
            self.refresh(sys, x0, dt)?;
        }
        let f0 = eval(sys, x0)?;
        let mut x = x0.to_vec();
        let mut refreshed = false;
        let mut last = (f64::NAN, 0);
        for iter in 0..MAX_STEP_ITERATIONS {
            let fx = eval(sys, &x)?;
            let r = DVector::from_iterator(
                x.len(),
                (0..x.len()).map(|k| x[k] - x0[k] - 0.5 * dt * (f0[k] + fx[k])),
            );
            let (lu, _) = self.iteration_matrix.as_ref().expect("refreshed above");
            let dx = lu
                .solve(&r)
                .ok_or_else(|| diverged("singular iteration matrix".to_string()))?;
            let mut worst: f64 = 0.0;
            let mut worst_k = 0;
            for k in 0..x.len() {
                x[k] -= dx[k];
                let rel = dx[k].abs() / (1.0 + x[k].abs());
                if rel > worst {
                    worst = rel;
                    worst_k = k;
                }
            }
            last = (worst, worst_k);
            if !worst.is_finite() {
                return Err(diverged("non-finite state".to_string()));
            }
            if worst < STEP_TOLERANCE {
                sys.project(&mut x);
                return Ok(x);
            }
            if iter + 1 >= REFRESH_AFTER && !refreshed {
                self.refresh(sys, &x, dt)?;
                refreshed = true;
            }
        }
        Err(diverged(format!(
            "Newton did not reach {STEP_TOLERANCE:e} in {MAX_STEP_ITERATIONS} iterations (last update {:.2e} in `{}`)",
            last.0,
            sys.state_name(last.1)
        )))
    }
}

/// Single trapezoidal step with a fresh Jacobian.
pub fn integrate_step<S: DynamicSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    dt: f64,
) -> Result<Vec<f64>, SystemError> {
    TrapezoidalIntegrator::new().step(sys, x, 0.0, dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    /// Max-norm of the derivative vector at `x`.
    pub residual: f64,
    /// Residual evaluations performed, including the final one.
    pub iterations: usize,
}

/// Newton iteration on `f(x) = 0` using a central-difference Jacobian and an
/// SVD pseudo-inverse, so rank deficiency from a free angle reference does
/// not stop the search. Steps are halved until the max-norm residual drops;
/// the search ends when no step helps.
pub fn find_equilibrium<S: DynamicSystem + ?Sized>(
    sys: &S,
    guess: &[f64],
) -> Result<Equilibrium, SystemError> {
    let worst = |f: &[f64]| {
        f.iter()
            .enumerate()
            .map(|(k, v)| (k, v.abs()))
            .fold(
                (0, 0.0f64),
                |a, b| if b.1 > a.1 || b.1.is_nan() { b } else { a },
            )
    };
    let mut x = guess.to_vec();
    let mut f = eval(sys, &x)?;
    let mut evaluations = 1;
    for _ in 0..MAX_EQUILIBRIUM_ITERATIONS {
        let (_, r) = worst(&f);
        if r < EQUILIBRIUM_TARGET {
            break;
        }
        let jac = finite_difference_jacobian(sys, &x, true)?;
        let svd = jac.svd(true, true);
        let tol = 1e-10 * svd.singular_values.max();
        let Ok(dx) = svd.solve(&DVector::from_column_slice(&f), tol) else {
            break;
        };
        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..=MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a - step * d).collect();
            sys.project(&mut trial);
            evaluations += 1;
            // A trial the model cannot evaluate counts as no improvement.
            if let Ok(ft) = eval(sys, &trial) {
                if worst(&ft).1 < r {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((xt, ft)) => {
                x = xt;
                f = ft;
            }
            None => break,
        }
    }
    let (k, r) = worst(&f);
    if r < EQUILIBRIUM_ACCEPT {
        return Ok(Equilibrium {
            x,
            residual: r,
            iterations: evaluations,
        });
    }
    Err(SystemError::EquilibriumDiverged {
        state: sys.state_name(k),
        residual: r,
        iterations: evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::FnSystem;
    use super::*;

    #[test]
    fn scalar_decay_matches_trapezoidal_factor() {
        let sys = FnSystem {
            dim: 1,
            f: |x: &[f64], dx: &mut [f64]| dx[0] = -x[0],
        };
        let x1 = integrate_step(&sys, &[1.0], 0.1).unwrap();
        assert!((x1[0] - 0.95 / 1.05).abs() < 1e-12);
        assert!((x1[0] - 0.904761).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let sys = FnSystem {
            dim: 2,
            f: |x: &[f64], dx: &mut [f64]| {
                dx[0] = x[1];
                dx[1] = -4.0 * x[0] - 0.5 * x[1];
            },
        };
        let x1 = integrate_step(&sys, &[0.0, 0.0], 0.01).unwrap();
        assert_eq!(x1, vec![0.0, 0.0]);
    }

    #[test]
    fn second_order_convergence() {
        // x'' = −x, exact solution cos t.
        let sys = FnSystem {
            dim: 2,
            f: |x: &[f64], dx: &mut [f64]| {
                dx[0] = x[1];
                dx[1] = -x[0];
            },
        };
        let err = |dt: f64| {
            let mut integ = TrapezoidalIntegrator::new();
            let mut x = vec![1.0, 0.0];
            let n = (2.0 / dt).round() as usize;
            for k in 0..n {
                x = integ.step(&sys, &x, k as f64 * dt, dt).unwrap();
            }
            (x[0] - 2.0f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn pendulum_equilibrium_found() {
        // Damped pendulum with torque 0.5: sin θ = 0.5.
        let sys = FnSystem {
            dim: 2,
            f: |x: &[f64], dx: &mut [f64]| {
                dx[0] = x[1];
                dx[1] = 0.5 - x[0].sin() - 0.2 * x[1];
            },
        };
        let eq = find_equilibrium(&sys, &[0.3, 0.1]).unwrap();
        assert!((eq.x[0] - 0.5f64.asin()).abs() < 1e-9);
        assert!(eq.x[1].abs() < 1e-9);

        let again = find_equilibrium(&sys, &eq.x).unwrap();
        assert!(again.iterations <= 1);
    }

    #[test]
    fn rank_deficient_equilibrium_is_handled() {
        // Only the difference x0 − x1 is pinned down.
        let sys = FnSystem {
            dim: 2,
            f: |x: &[f64], dx: &mut [f64]| {
                dx[0] = 0.2 - (x[0] - x[1]);
                dx[1] = -(0.2 - (x[0] - x[1]));
            },
        };
        let eq = find_equilibrium(&sys, &[0.0, 0.0]).unwrap();
        assert!((eq.x[0] - eq.x[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn no_equilibrium_names_worst_state() {
        let sys = FnSystem {
            dim: 2,
            f: |x: &[f64], dx: &mut [f64]| {
                dx[0] = 1.0 + x[0] * x[0];
                dx[1] = -x[1];
            },
        };
        match find_equilibrium(&sys, &[0.0, 1.0]) {
            Err(SystemError::EquilibriumDiverged { state, .. }) => assert_eq!(state, "x0"),
            other => panic!("{other:?}"),
        }
    }
}
