use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use nsf_autodiff::{Activation, Checkpoint, Mlp, Tensor};
use nsf_core::{Aabb, Vec3};

use crate::{FusionError, Result};

/// Latent code dimensionality.
pub const LATENT_DIM: usize = 256;

const CODE_NORM_CAP: f32 = 10.0;
const SOFTPLUS_BETA: f32 = 100.0;
const INIT_RADIUS: f32 = 0.5;

/// Trainable per-subject latent, kept inside the norm cap.
#[derive(Debug, Clone)]
pub struct SubjectCode {
    pub h: Tensor,
}

impl SubjectCode {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1e-3).unwrap();
        Self {
            h: Tensor::from_vec(
                1,
                LATENT_DIM,
                (0..LATENT_DIM).map(|_| normal.sample(rng) as f32).collect(),
            ),
        }
    }

    pub fn norm(&self) -> f32 {
        self.h.data.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    /// Rescales the code back onto the norm ball when training pushes it out.
    pub fn clamp_norm(&mut self) {
        let n = self.norm();
        if n > CODE_NORM_CAP {
            let s = CODE_NORM_CAP / n;
            self.h.data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Shared shape decoder plus the set of subject codes and the training
/// bounding box. Negative SDF inside, positive outside; the convention is
/// fixed by geometric initialization to a sphere of radius 0.5.
#[derive(Debug, Clone)]
pub struct FusionModel {
    pub decoder: Mlp,
    codes: BTreeMap<String, SubjectCode>,
    pub bbox: Aabb,
}

impl FusionModel {
    /// Decoder widths: 8 hidden layers of 256 units on a 3+256 input.
    pub fn decoder_widths() -> Vec<usize> {
        let mut w = vec![3 + LATENT_DIM];
        w.extend(std::iter::repeat(256).take(8));
        w.push(1);
        w
    }

    pub fn new<R: Rng>(rng: &mut R) -> Self {
        let mut decoder = Mlp::geometric(&Self::decoder_widths(), SOFTPLUS_BETA, INIT_RADIUS, rng);
        calibrate_final_layer_to_sphere(&mut decoder, INIT_RADIUS, rng);
        Self {
            decoder,
            codes: BTreeMap::new(),
            bbox: Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap(),
        }
    }

    pub fn register_subject<R: Rng>(&mut self, id: &str, rng: &mut R) -> Result<()> {
        if self.codes.contains_key(id) {
            return Err(FusionError::DuplicateSubject(id.to_string()));
        }
        self.codes.insert(id.to_string(), SubjectCode::random(rng));
        Ok(())
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.codes.keys().map(String::as_str)
    }

    pub fn subject_count(&self) -> usize {
        self.codes.len()
    }

    pub fn code(&self, id: &str) -> Result<&SubjectCode> {
        self.codes
            .get(id)
            .ok_or_else(|| FusionError::UnknownSubject(id.to_string()))
    }

    pub fn code_mut(&mut self, id: &str) -> Result<&mut SubjectCode> {
        self.codes
            .get_mut(id)
            .ok_or_else(|| FusionError::UnknownSubject(id.to_string()))
    }

    /// Assembles the decoder input rows `x ⊕ h` for a point batch.
    pub fn input_matrix(&self, id: &str, points: &[Vec3]) -> Result<Tensor> {
        let code = self.code(id)?;
        let dim = 3 + LATENT_DIM;
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            data.push(p.x as f32);
            data.push(p.y as f32);
            data.push(p.z as f32);
            data.extend_from_slice(&code.h.data);
        }
        Ok(Tensor::from_vec(points.len(), dim, data))
    }

    /// Signed distance at one point (meters).
    pub fn sdf_eval(&self, id: &str, x: &Vec3) -> Result<f64> {
        Ok(self.sdf_batch(id, std::slice::from_ref(x))?[0])
    }

    /// Signed distances for a point batch.
    pub fn sdf_batch(&self, id: &str, points: &[Vec3]) -> Result<Vec<f64>> {
        let input = self.input_matrix(id, points)?;
        let out = self.decoder.forward(&input);
        Ok(out.data.iter().map(|&v| v as f64).collect())
    }

    /// Spatial SDF gradient at one point.
    pub fn sdf_grad(&self, id: &str, x: &Vec3) -> Result<Vec3> {
        let (_, grads) = self.sdf_with_grad_batch(id, std::slice::from_ref(x))?;
        Ok(grads[0])
    }

    /// Values and spatial gradients for a batch; the gradient comes from the
    /// exact layer-chain of the decoder restricted to the xyz input columns.
    pub fn sdf_with_grad_batch(&self, id: &str, points: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        let input = self.input_matrix(id, points)?;
        let (vals, grads) = self.decoder.forward_with_input_grad(&input);
        let dim = 3 + LATENT_DIM;
        let gvec = (0..points.len())
            .map(|i| {
                Vec3::new(
                    grads.data[i * dim] as f64,
                    grads.data[i * dim + 1] as f64,
                    grads.data[i * dim + 2] as f64,
                )
            })
            .collect();
        Ok((vals.data.iter().map(|&v| v as f64).collect(), gvec))
    }

    // ---- persistence -------------------------------------------------------

    pub fn write_into(&self, ck: &mut Checkpoint) {
        for (l, layer) in self.decoder.layers.iter().enumerate() {
            ck.insert_tensor(format!("shape/layer{l}/w"), &layer.w);
            ck.insert_tensor(format!("shape/layer{l}/b"), &layer.b);
        }
        for (id, code) in &self.codes {
            ck.insert_tensor(format!("code/{id}"), &code.h);
        }
        ck.insert(
            "box/min",
            vec![3],
            vec![self.bbox.min.x as f32, self.bbox.min.y as f32, self.bbox.min.z as f32],
        );
        ck.insert(
            "box/max",
            vec![3],
            vec![self.bbox.max.x as f32, self.bbox.max.y as f32, self.bbox.max.z as f32],
        );
    }

    pub fn read_from(ck: &Checkpoint) -> Result<Self> {
        let widths = Self::decoder_widths();
        let mut layers = Vec::new();
        for l in 0..widths.len() - 1 {
            let w = ck.tensor(&format!("shape/layer{l}/w"))?;
            let b = ck.tensor(&format!("shape/layer{l}/b"))?;
            let act = if l == widths.len() - 2 {
                Activation::None
            } else {
                Activation::Softplus(SOFTPLUS_BETA)
            };
            layers.push(nsf_autodiff::Layer { w, b, act });
        }
        let decoder = Mlp { layers };

        let mut codes = BTreeMap::new();
        for name in ck.names() {
            if let Some(id) = name.strip_prefix("code/") {
                codes.insert(
                    id.to_string(),
                    SubjectCode {
                        h: ck.tensor(name)?,
                    },
                );
            }
        }
        let bmin = ck.tensor("box/min")?;
        let bmax = ck.tensor("box/max")?;
        let bbox = Aabb::new(
            Vec3::new(bmin.data[0] as f64, bmin.data[1] as f64, bmin.data[2] as f64),
            Vec3::new(bmax.data[0] as f64, bmax.data[1] as f64, bmax.data[2] as f64),
        )?;
        Ok(Self {
            decoder,
            codes,
            bbox,
        })
    }
}

/// Re-solves the final linear layer so the fresh network reads as the signed
/// distance to a sphere of the given radius. The hidden layers' random
/// features stay untouched; ridge least squares over sampled box points fits
/// the last weight vector and bias to `|x| - radius`. The smoothing bias of
/// sharp softplus units makes the purely analytic scheme miss the target by
/// a few centimeters near the origin; the solve removes that error.
fn calibrate_final_layer_to_sphere<R: Rng>(decoder: &mut Mlp, radius: f32, rng: &mut R) {
    use nalgebra::{DMatrix, DVector};

    let samples = 4096usize;
    let input_dim = decoder.input_dim();
    let hidden = decoder.layers[decoder.layers.len() - 1].w.rows;

    let mut data = vec![0.0f32; samples * input_dim];
    let mut target = DVector::<f64>::zeros(samples);
    for i in 0..samples {
        // Half box-uniform, half radius-uniform; the latter densely covers
        // the region around the origin where the fit is hardest.
        let (x, y, z) = if i % 2 == 0 {
            (
                rng.gen_range(-1.2..1.2f64),
                rng.gen_range(-1.2..1.2f64),
                rng.gen_range(-1.2..1.2f64),
            )
        } else {
            let dir = loop {
                let d = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if d.norm_squared() > 1e-6 && d.norm_squared() <= 1.0 {
                    break d.normalize();
                }
            };
            let r = rng.gen_range(0.0..1.5f64);
            (dir.x * r, dir.y * r, dir.z * r)
        };
        data[i * input_dim] = x as f32;
        data[i * input_dim + 1] = y as f32;
        data[i * input_dim + 2] = z as f32;
        // Latent columns stay zero: codes start near zero.
        target[i] = (x * x + y * y + z * z).sqrt() - radius as f64;
    }
    let inputs = Tensor::from_vec(samples, input_dim, data);
    let h = decoder.forward_layers(&inputs, decoder.layers.len() - 1);

    // Design matrix with a constant column for the bias.
    let cols = hidden + 1;
    let mut a = DMatrix::<f64>::zeros(samples, cols);
    for i in 0..samples {
        for j in 0..hidden {
            a[(i, j)] = h.data[i * hidden + j] as f64;
        }
        a[(i, hidden)] = 1.0;
    }
    let ata = a.transpose() * &a + DMatrix::<f64>::identity(cols, cols) * 1e-6;
    let atb = a.transpose() * target;
    let solution = ata
        .cholesky()
        .expect("ridge-regularized normal equations are positive definite")
        .solve(&atb);

    let last = decoder.layers.last_mut().expect("nonempty MLP");
    for j in 0..hidden {
        last.w.data[j] = solution[j] as f32;
    }
    last.b.data[0] = solution[hidden] as f32;
}
