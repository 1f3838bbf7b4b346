//! Separable interpolation kernels and point sampling.
//!
//! A continuous index is inside an image when every component lies in
//! `[-0.5, n - 0.5]`. Inside points whose kernel support crosses the border
//! read clamped edge samples; outside points return the background.

use nalgebra::Vector3;

use crate::grid::ScalarImage;

/// Indices this close to an integer are treated as exactly on the sample.
const SNAP: f64 = 1e-9;
const MAX_TAPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpKernel {
    Nearest,
    #[default]
    Linear,
    /// Keys piecewise cubic, `a = -0.5`.
    Cubic,
    /// Sinc truncated at 3 samples per side, rectangular window.
    Sinc3,
}

impl std::str::FromStr for InterpKernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "linear" => Ok(Self::Linear),
            "cubic" => Ok(Self::Cubic),
            "sinc3" => Ok(Self::Sinc3),
            other => Err(format!("unknown kernel '{other}'")),
        }
    }
}

impl InterpKernel {
    /// Kernel value at signed distance `x` (in samples).
    pub fn weight(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            Self::Nearest => {
                if ax < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Linear => (1.0 - ax).max(0.0),
            Self::Cubic => {
                const A: f64 = -0.5;
                if ax <= 1.0 {
                    ((A + 2.0) * ax - (A + 3.0)) * ax * ax + 1.0
                } else if ax < 2.0 {
                    ((A * ax - 5.0 * A) * ax + 8.0 * A) * ax - 4.0 * A
                } else {
                    0.0
                }
            }
            Self::Sinc3 => {
                if ax >= 3.0 {
                    0.0
                } else if ax == 0.0 {
                    1.0
                } else {
                    let px = std::f64::consts::PI * x;
                    px.sin() / px
                }
            }
        }
    }

    /// Taps lie in `floor(x) - lo ..= floor(x) + hi`.
    fn support(self) -> (i64, i64) {
        match self {
            Self::Nearest => (0, 0),
            Self::Linear => (0, 1),
            Self::Cubic => (1, 2),
            Self::Sinc3 => (2, 3),
        }
    }
}

#[derive(Clone, Copy)]
struct Taps {
    index: [usize; MAX_TAPS],
    weight: [f64; MAX_TAPS],
    len: usize,
}

impl Taps {
    fn single(i: usize) -> Self {
        let mut t = Taps {
            index: [0; MAX_TAPS],
            weight: [0.0; MAX_TAPS],
            len: 1,
        };
        t.index[0] = i;
        t.weight[0] = 1.0;
        t
    }
}

fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

fn axis_taps(kernel: InterpKernel, x: f64, n: usize) -> Taps {
    if n == 1 {
        return Taps::single(0);
    }
    let r = x.round();
    if (x - r).abs() <= SNAP {
        return Taps::single(clamp_index(r as i64, n));
    }
    if kernel == InterpKernel::Nearest {
        return Taps::single(clamp_index((x + 0.5).floor() as i64, n));
    }
    let base = x.floor() as i64;
    let (lo, hi) = kernel.support();
    let mut t = Taps {
        index: [0; MAX_TAPS],
        weight: [0.0; MAX_TAPS],
        len: 0,
    };
    let mut sum = 0.0;
    for i in (base - lo)..=(base + hi) {
        let w = kernel.weight(x - i as f64);
        t.index[t.len] = clamp_index(i, n);
        t.weight[t.len] = w;
        t.len += 1;
        sum += w;
    }
    if kernel == InterpKernel::Sinc3 {
        // truncated sinc does not sum to one between samples
        for w in &mut t.weight[..t.len] {
            *w /= sum;
        }
    }
    t
}

pub fn is_inside(dims: [usize; 3], index: &Vector3<f64>) -> bool {
    (0..3).all(|a| index[a] >= -0.5 - SNAP && index[a] <= dims[a] as f64 - 0.5 + SNAP)
}

/// Interpolated value at a continuous index, or `None` outside the image.
pub fn sample_index(
    image: &ScalarImage,
    kernel: InterpKernel,
    index: &Vector3<f64>,
) -> Option<f64> {
    let dims = image.grid().dims();
    if !is_inside(dims, index) {
        return None;
    }
    let tx = axis_taps(kernel, index.x, dims[0]);
    let ty = axis_taps(kernel, index.y, dims[1]);
    let tz = axis_taps(kernel, index.z, dims[2]);
    let data = image.data();
    let (sx, sy) = (dims[0], dims[0] * dims[1]);
    let mut acc = 0.0;
    for c in 0..tz.len {
        let mut acc_y = 0.0;
        for b in 0..ty.len {
            let row = tz.index[c] * sy + ty.index[b] * sx;
            let mut acc_x = 0.0;
            for a in 0..tx.len {
                acc_x += tx.weight[a] * data[row + tx.index[a]];
            }
            acc_y += ty.weight[b] * acc_x;
        }
        acc += tz.weight[c] * acc_y;
    }
    Some(acc)
}
