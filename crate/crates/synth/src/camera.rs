use nalgebra::Matrix4;
use nsf_core::Vec3;
use serde::{Deserialize, Serialize};

/// Pinhole camera with a rigid camera-to-world extrinsic. The default is a
/// Kinect-like sensor at the world origin looking down +z; bodies are placed
/// in front of it via their pose root translation, so world coordinates and
/// camera coordinates coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major camera-to-world rigid transform.
    pub cam_to_world: [[f64; 4]; 4],
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
            cam_to_world: [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }
}

impl Camera {
    pub fn cam_to_world_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.cam_to_world[r][c])
    }

    pub fn world_to_cam_matrix(&self) -> Matrix4<f64> {
        self.cam_to_world_matrix()
            .try_inverse()
            .expect("rigid extrinsics are invertible")
    }

    /// Camera center in world coordinates (the normal-orientation viewpoint).
    pub fn position(&self) -> Vec3 {
        Vec3::new(
            self.cam_to_world[0][3],
            self.cam_to_world[1][3],
            self.cam_to_world[2][3],
        )
    }

    /// Projects a world point to (u, v, depth); depth is camera-space z.
    pub fn project(&self, world: &Vec3) -> (f64, f64, f64) {
        let p = self.world_to_cam_matrix().transform_point(&(*world).into());
        let u = self.cx + self.fx * p.x / p.z;
        let v = self.cy + self.fy * p.y / p.z;
        (u, v, p.z)
    }

    /// Unprojects a pixel with known depth back to a world point.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let x = (u - self.cx) / self.fx * depth;
        let y = (v - self.cy) / self.fy * depth;
        self.cam_to_world_matrix()
            .transform_point(&nalgebra::Point3::new(x, y, depth))
            .coords
    }

    /// Linear size of one pixel's footprint at the given depth.
    pub fn pixel_footprint(&self, depth: f64) -> f64 {
        depth / self.fx.min(self.fy)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> crate::Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> crate::Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
