use super::{GazeError, GazeFrame, HeadPose, MonitorPlane};
use crate::geometry::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frame period of the simulated facial camera (s).
pub const FRAME_PERIOD: f64 = 1.0 / 30.0;

/// Von Mises–Fisher draw on the unit sphere around `mean` (Wood's method,
/// closed form on S²).
pub fn sample_vmf<R: Rng + ?Sized>(mean: &Vec3, kappa: f64, rng: &mut R) -> Vec3 {
    let xi: f64 = rng.random();
    let w = if kappa > 1e-9 {
        1.0 + (xi + (1.0 - xi) * (-2.0 * kappa).exp()).ln() / kappa
    } else {
        2.0 * xi - 1.0
    };
    let w = w.clamp(-1.0, 1.0);
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let helper = if mean.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = mean.cross(&helper).normalize();
    let e2 = mean.cross(&e1);
    let r = (1.0 - w * w).max(0.0).sqrt();
    (mean * w + (e1 * phi.cos() + e2 * phi.sin()) * r).normalize()
}

/// Concentration giving an RMS angular deviation of `noise_rad`.
pub fn kappa_for_rms(noise_rad: f64) -> f64 {
    2.0 / (noise_rad * noise_rad)
}

/// Frames looking at monitor pixel `target` (λ, μ); head and eye directions are
/// perturbed independently with RMS angular error `noise_deg`.
pub fn simulate_gaze(
    target: (f64, f64),
    monitor: &MonitorPlane,
    head: &HeadPose,
    noise_deg: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<GazeFrame>, GazeError> {
    if n == 0 {
        return Err(GazeError::NoFrames);
    }
    if !monitor.contains(target.0, target.1) {
        return Err(GazeError::TargetOutside(target.0, target.1));
    }
    let dir = (monitor.point_at(target.0, target.1) - head.position).normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kappa = (noise_deg > 0.0).then(|| kappa_for_rms(noise_deg.to_radians()));
    Ok((0..n)
        .map(|k| {
            let (v_h, v_g) = match kappa {
                Some(kappa) => (sample_vmf(&dir, kappa, &mut rng), sample_vmf(&dir, kappa, &mut rng)),
                None => (dir, dir),
            };
            GazeFrame { t: k as f64 * FRAME_PERIOD, v_h, v_g }
        })
        .collect())
}
