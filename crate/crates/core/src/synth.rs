//! Synthetic data: planted low-rank slices with known factors, and
//! time-domain volumes of linear-moveout events.

use nalgebra::linalg::QR;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{complex_normal, gaussian_matrix, rng, CMatrix, C64};
use crate::solver::FactorPair;
use crate::transforms::{Matricization, MeasurementOp};
use crate::volume::{Axis, ComplexVolume, SpatialDims};

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// All planted singular values equal to 1.
    Flat,
    /// `σ_k = ratio^(k−1)`.
    Geometric(f64),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct PlantSpec {
    pub p: usize,
    pub q: usize,
    pub rank: usize,
    pub profile: Profile,
    /// Noise norm as a fraction of the observed signal norm.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// `X = U Σ V^H` with Haar-distributed `U`, `V`.
#[derive(Clone, Debug)]
pub struct PlantedSlice {
    pub spec: PlantSpec,
    pub truth: CMatrix,
    pub singular_values: Vec<f64>,
    /// Balanced factors `(U Σ^{1/2}, V Σ^{1/2})`.
    pub factors: FactorPair,
}

fn haar_columns<R: rand::Rng + ?Sized>(n: usize, k: usize, r: &mut R) -> CMatrix {
    let qr = QR::new(gaussian_matrix(n, k, r));
    let mut q = qr.q();
    let rr = qr.r();
    // fix column phases so the distribution is exactly Haar
    for j in 0..k {
        let d = rr[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            q.column_mut(j).iter_mut().for_each(|v| *v *= phase);
        }
    }
    q
}

pub fn plant_slice(spec: &PlantSpec) -> Result<PlantedSlice> {
    if spec.rank == 0 || spec.rank > spec.p.min(spec.q) {
        return Err(Error::InvalidParameter(format!(
            "planted rank {} outside [1, {}]",
            spec.rank,
            spec.p.min(spec.q)
        )));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::InvalidParameter("noise floor must be nonnegative".into()));
    }
    let sigma: Vec<f64> = match spec.profile {
        Profile::Flat => vec![1.0; spec.rank],
        Profile::Geometric(ratio) => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::InvalidParameter(format!("decay ratio {ratio} outside (0, 1]")));
            }
            (0..spec.rank).map(|k| ratio.powi(k as i32)).collect()
        }
    };
    let mut r = rng(spec.seed);
    let u = haar_columns(spec.p, spec.rank, &mut r);
    let v = haar_columns(spec.q, spec.rank, &mut r);
    let mut left = u;
    let mut right = v;
    for (j, s) in sigma.iter().enumerate() {
        let h = C64::new(s.sqrt(), 0.0);
        left.column_mut(j).iter_mut().for_each(|x| *x *= h);
        right.column_mut(j).iter_mut().for_each(|x| *x *= h);
    }
    let factors = FactorPair::new(left, right)?;
    Ok(PlantedSlice {
        spec: spec.clone(),
        truth: factors.product(),
        singular_values: sigma,
        factors,
    })
}

impl PlantedSlice {
    pub fn matricization(&self) -> Matricization {
        Matricization::plain(self.spec.p, self.spec.q)
    }

    /// `b = P_Ω(X) + ε` with `‖ε‖_F = noise · ‖P_Ω(X)‖_F`, ε supported on Ω.
    /// `op` must act on the plain `p × q` layout.
    pub fn observe(&self, op: &MeasurementOp) -> Result<CMatrix> {
        let clean = op.measure(&self.truth)?;
        if self.spec.noise == 0.0 {
            return Ok(clean);
        }
        let mut r = rng(self.spec.seed ^ 0x6e_6f69_7365);
        let noise: Vec<C64> = (0..op.observed_count()).map(|_| complex_normal(&mut r)).collect();
        let nn = noise.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let target = self.spec.noise * crate::linalg::frob(&clean);
        let scaled: Vec<C64> = noise.iter().map(|v| v * (target / nn)).collect();
        Ok(clean + op.scatter(&scaled))
    }

    /// The slice as a one-bin frequency-domain volume (`ry = sy = 1`).
    pub fn to_volume(&self) -> Result<ComplexVolume> {
        let (p, q) = (self.spec.p, self.spec.q);
        let data = (0..p)
            .flat_map(|i| (0..q).map(move |j| (i, j)))
            .map(|(i, j)| self.truth[(i, j)])
            .collect();
        ComplexVolume::new(
            vec![Axis::F, Axis::Rx, Axis::Ry, Axis::Sx, Axis::Sy],
            vec![1, p, 1, q, 1],
            data,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct Event {
    /// Arrival time at zero offset (s).
    pub apex: f64,
    /// Moveout per metre of |offset| along x and y (s/m).
    #[serde(default)]
    pub slowness_x: f64,
    #[serde(default)]
    pub slowness_y: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct EventSpec {
    pub rx: usize,
    pub ry: usize,
    pub sx: usize,
    pub sy: usize,
    /// Grid spacing shared by sources and receivers (m).
    pub spacing: f64,
    pub nt: usize,
    pub dt: f64,
    /// Ricker peak frequency (Hz).
    pub peak_freq: f64,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl EventSpec {
    pub fn dims(&self) -> SpatialDims {
        SpatialDims::new(self.rx, self.ry, self.sx, self.sy)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventReport {
    /// Arrivals that fell outside the record window.
    pub clipped: usize,
}

pub fn ricker(t: f64, peak_freq: f64) -> f64 {
    let a = (std::f64::consts::PI * peak_freq * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Volume with axes `(rx, ry, sx, sy, t)`. Each event arrives at
/// `apex + slowness_x·|x_r − x_s| + slowness_y·|y_r − y_s|`, so its
/// monochromatic slices factor into an x-part and a y-part.
pub fn linear_events(spec: &EventSpec) -> Result<(ComplexVolume, EventReport)> {
    let dims = spec.dims();
    if dims.is_empty() || spec.nt == 0 || !(spec.dt > 0.0) || !(spec.spacing > 0.0) || !(spec.peak_freq > 0.0) {
        return Err(Error::InvalidParameter("event grid extents, dt, spacing and peak frequency must be positive".into()));
    }
    let t_end = (spec.nt - 1) as f64 * spec.dt;
    let mut report = EventReport::default();
    let mut data = vec![C64::new(0.0, 0.0); dims.len() * spec.nt];
    for rx in 0..spec.rx {
        for ry in 0..spec.ry {
            for sx in 0..spec.sx {
                for sy in 0..spec.sy {
                    // row-major (rx, ry, sx, sy, t)
                    let trace = (((rx * spec.ry + ry) * spec.sx + sx) * spec.sy + sy) * spec.nt;
                    let hx = (rx as f64 - sx as f64).abs() * spec.spacing;
                    let hy = (ry as f64 - sy as f64).abs() * spec.spacing;
                    for ev in &spec.events {
                        let t0 = ev.apex + ev.slowness_x * hx + ev.slowness_y * hy;
                        if !(0.0..=t_end).contains(&t0) {
                            report.clipped += 1;
                        }
                        for (n, v) in data[trace..trace + spec.nt].iter_mut().enumerate() {
                            v.re += ev.amplitude * ricker(n as f64 * spec.dt - t0, spec.peak_freq);
                        }
                    }
                }
            }
        }
    }
    let vol = ComplexVolume::new(
        vec![Axis::Rx, Axis::Ry, Axis::Sx, Axis::Sy, Axis::T],
        vec![spec.rx, spec.ry, spec.sx, spec.sy, spec.nt],
        data,
    )?;
    Ok((vol, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dft::dft_time_axis;
    use crate::linalg::frob;
    use crate::sampling::uniform_entry_mask;
    use crate::transforms::{singular_decay, top_fraction, unfold, Mode};

    fn spec(rank: usize, profile: Profile, noise: f64) -> PlantSpec {
        PlantSpec {
            p: 20,
            q: 15,
            rank,
            profile,
            noise,
            seed: 3,
        }
    }

    #[test]
    fn rank_one_flat() {
        let s = plant_slice(&spec(1, Profile::Flat, 0.0)).unwrap();
        let d = singular_decay(&s.truth).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!(d[1..].iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn geometric_profile_exact() {
        let s = plant_slice(&spec(8, Profile::Geometric(0.5), 0.0)).unwrap();
        let d = singular_decay(&s.truth).unwrap();
        for k in 0..8 {
            assert!((d[k] - 0.5f64.powi(k as i32)).abs() < 1e-10, "{k}: {}", d[k]);
        }
        assert!(d[8..].iter().all(|v| *v < 1e-10));
    }

    #[test]
    fn noise_scaling_contract() {
        let s = plant_slice(&spec(3, Profile::Flat, 0.01)).unwrap();
        let op = MeasurementOp::new(uniform_entry_mask(20, 15, 0.6, 1).unwrap(), Mode::SrcPair);
        let b = s.observe(&op).unwrap();
        let clean = op.measure(&s.truth).unwrap();
        let ratio = frob(&(&b - &clean)) / frob(&clean);
        assert!((ratio - 0.01).abs() < 1e-12);
        assert!(op.supported_on_mask(&b));
    }

    #[test]
    fn planted_volume_layout() {
        let s = plant_slice(&spec(2, Profile::Flat, 0.0)).unwrap();
        let v = s.to_volume().unwrap();
        let t = v.slice(0).unwrap();
        let m = unfold(&t, &s.matricization());
        assert_eq!(m, s.truth);
    }

    fn event_spec(events: Vec<Event>) -> EventSpec {
        EventSpec {
            rx: 5,
            ry: 4,
            sx: 4,
            sy: 3,
            spacing: 25.0,
            nt: 64,
            dt: 0.004,
            peak_freq: 15.0,
            events,
        }
    }

    #[test]
    fn no_events_zero_volume() {
        let (v, rep) = linear_events(&event_spec(vec![])).unwrap();
        assert_eq!(v.norm(), 0.0);
        assert_eq!(rep.clipped, 0);
    }

    #[test]
    fn flat_event_is_rank_one_everywhere() {
        let ev = Event {
            apex: 0.1,
            slowness_x: 0.0,
            slowness_y: 0.0,
            amplitude: 1.0,
        };
        let (v, _) = linear_events(&event_spec(vec![ev])).unwrap();
        assert!(v.norm() > 0.0);
        let f = dft_time_axis(&v).unwrap();
        for k in 1..10 {
            let t = f.slice(k).unwrap();
            let m = unfold(&t, &Matricization::new(Mode::RecSrcX, t.dims));
            let d = singular_decay(&m).unwrap();
            assert!(d[1] < 1e-10, "bin {k}: {}", d[1]);
        }
    }

    #[test]
    fn offset_moveout_separates_in_recsrcx() {
        let events = vec![
            Event { apex: 0.08, slowness_x: 1.0 / 1500.0, slowness_y: 1.0 / 2500.0, amplitude: 1.0 },
            Event { apex: 0.12, slowness_x: 1.0 / 3000.0, slowness_y: 1.0 / 1200.0, amplitude: 0.7 },
        ];
        let (v, rep) = linear_events(&event_spec(events)).unwrap();
        assert_eq!(rep.clipped, 0);
        let f = dft_time_axis(&v).unwrap();
        // 10 Hz is bin 10/(64·0.004) ≈ 2.56 → nearest bin 3 is 11.7 Hz
        let t = f.slice(3).unwrap();
        let rec = singular_decay(&unfold(&t, &Matricization::new(Mode::RecSrcX, t.dims))).unwrap();
        let src = singular_decay(&unfold(&t, &Matricization::new(Mode::SrcPair, t.dims))).unwrap();
        assert!(top_fraction(&rec, 2) >= 0.95);
        assert!(top_fraction(&src, 2) < top_fraction(&rec, 2));
    }

    #[test]
    fn clipped_events_are_flagged() {
        let ev = Event { apex: 0.3, slowness_x: 0.01, slowness_y: 0.0, amplitude: 1.0 };
        let (_, rep) = linear_events(&event_spec(vec![ev])).unwrap();
        assert!(rep.clipped > 0);
    }
}
