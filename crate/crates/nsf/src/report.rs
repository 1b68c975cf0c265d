/// Feature-count comparison of surface-anchored storage against volumetric
/// and tri-plane grids of the given resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureCountReport {
    pub volume: usize,
    pub triplane: usize,
    pub nsf: usize,
    /// 1 - nsf / volume.
    pub savings_vs_volume: f64,
    /// 1 - nsf / triplane.
    pub savings_vs_triplane: f64,
}

impl FeatureCountReport {
    /// Savings rounded to 0.1 percent, as displayed.
    pub fn savings_percent(&self) -> (f64, f64) {
        (
            (self.savings_vs_volume * 1000.0).round() / 10.0,
            (self.savings_vs_triplane * 1000.0).round() / 10.0,
        )
    }
}

/// Volume storage grows with res^3, tri-plane with 3 res^2; the surface
/// field only needs one feature per basis vertex.
pub fn feature_count_report(
    vertex_count: usize,
    volume_res: usize,
    plane_res: usize,
) -> FeatureCountReport {
    let volume = volume_res * volume_res * volume_res;
    let triplane = 3 * plane_res * plane_res;
    FeatureCountReport {
        volume,
        triplane,
        nsf: vertex_count,
        savings_vs_volume: 1.0 - vertex_count as f64 / volume as f64,
        savings_vs_triplane: 1.0 - vertex_count as f64 / triplane as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts_and_savings() {
        let r = feature_count_report(6890, 64, 128);
        assert_eq!(r.volume, 262_144);
        assert_eq!(r.triplane, 49_152);
        assert_eq!(r.nsf, 6890);
        let (vs_volume, vs_triplane) = r.savings_percent();
        assert_eq!(vs_volume, 97.4);
        assert_eq!(vs_triplane, 86.0);
    }

    #[test]
    fn degenerate_resolution_still_defined() {
        let r = feature_count_report(1, 1, 1);
        assert_eq!(r.volume, 1);
        assert_eq!(r.triplane, 3);
        assert_eq!(r.nsf, 1);
        assert_eq!(r.savings_vs_volume, 0.0);
        assert!((r.savings_vs_triplane - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    }
}
