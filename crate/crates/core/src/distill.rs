//! Teacher → student label transfer and multi-source label fusion.

use alloc::format;
use alloc::vec::Vec;

use crate::labels::RemapTable;
use crate::raster::{downsample_majority, resample_nearest, Grid, MaskRaster};
use crate::{Error, Result};

/// Converts a high-resolution teacher class map into weak labels on
/// `student_grid`.
///
/// The teacher map is remapped into the student scheme, nearest-resampled
/// onto `student_grid` refined by `factor` (so the teacher/student resolution
/// ratio need not be an integer), then majority-reduced block by block.
pub fn teacher_to_student(
    teacher: &MaskRaster,
    student_grid: &Grid,
    factor: usize,
    min_coverage: f64,
    remap: &RemapTable,
) -> Result<MaskRaster> {
    student_grid.validate()?;
    if factor == 0 {
        return Err(Error::InvalidArgument("factor must be >= 1".into()));
    }
    let overlap = teacher.grid.overlap_area(student_grid);
    if overlap <= 0.0 {
        return Err(Error::NoOverlap(format!(
            "teacher covers x [{}, {}] y [{}, {}], student covers x [{}, {}] y [{}, {}]",
            teacher.grid.origin_x,
            teacher.grid.max_x(),
            teacher.grid.min_y(),
            teacher.grid.origin_y,
            student_grid.origin_x,
            student_grid.max_x(),
            student_grid.min_y(),
            student_grid.origin_y,
        )));
    }
    let remapped = remap.apply(teacher)?;
    let fine = resample_nearest(&remapped, &student_grid.refine(factor)?)?;
    let coarse = downsample_majority(&fine, factor, min_coverage)?;
    // The refined-then-coarsened grid can differ from `student_grid` in the
    // last bit of `res`; the pixel layout is identical.
    MaskRaster::new(*student_grid, coarse.values)
}

/// Per pixel, the nonzero value of the highest-priority source that labels
/// it. Equal priorities resolve in list order.
pub fn fuse_labels(sources: &[(&MaskRaster, i32)]) -> Result<MaskRaster> {
    let Some(((first, _), rest)) = sources.split_first() else {
        return Err(Error::InvalidArgument("nothing to fuse".into()));
    };
    if let Some(i) = rest.iter().position(|(m, _)| m.grid != first.grid) {
        return Err(Error::GridMismatch(format!(
            "label source {} is not on the grid of source 0",
            i + 1
        )));
    }
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.sort_by_key(|&i| core::cmp::Reverse(sources[i].1));
    let mut out = MaskRaster::zeros(first.grid);
    for (p, v) in out.values.iter_mut().enumerate() {
        *v = order
            .iter()
            .map(|&i| sources[i].0.values[p])
            .find(|&x| x != 0)
            .unwrap_or(0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{ClassScheme, SourceTag};
    use alloc::vec;

    fn scheme() -> ClassScheme {
        ClassScheme::new("s", SourceTag::Student, &["Crop", "Trees", "Water"]).unwrap()
    }

    #[test]
    fn constant_teacher_gives_constant_student() {
        let hi = Grid::new(0.0, 40.0, 1.0, 40, 40).unwrap();
        let lo = Grid::new(0.0, 40.0, 10.0, 4, 4).unwrap();
        let t = MaskRaster::filled(hi, 1);
        let s = teacher_to_student(&t, &lo, 10, 0.5, &RemapTable::identity(&scheme())).unwrap();
        assert_eq!(s.values, vec![1; 16]);
        assert_eq!(s.grid, lo);
    }

    #[test]
    fn majority_and_coverage() {
        let hi = Grid::new(0.0, 10.0, 1.0, 10, 10).unwrap();
        let lo = Grid::new(0.0, 10.0, 10.0, 1, 1).unwrap();
        let id = RemapTable::identity(&scheme());
        // 70 Trees, 30 Crop
        let vals: Vec<u8> = (0..100).map(|i| if i < 70 { 2 } else { 1 }).collect();
        let t = MaskRaster::new(hi, vals).unwrap();
        assert_eq!(teacher_to_student(&t, &lo, 10, 0.5, &id).unwrap().values, vec![2]);
        // 40% labeled
        let vals: Vec<u8> = (0..100).map(|i| if i < 40 { 2 } else { 0 }).collect();
        let t = MaskRaster::new(hi, vals).unwrap();
        assert_eq!(teacher_to_student(&t, &lo, 10, 0.5, &id).unwrap().values, vec![0]);
    }

    #[test]
    fn non_integer_ratio_goes_through_intermediate_grid() {
        // 0.331 m teacher pixels under a 10 m student grid.
        let hi = Grid::new(0.0, 20.0, 0.331, 61, 61).unwrap();
        let lo = Grid::new(0.0, 20.0, 10.0, 2, 2).unwrap();
        let t = MaskRaster::filled(hi, 3);
        let s = teacher_to_student(&t, &lo, 30, 0.5, &RemapTable::identity(&scheme())).unwrap();
        assert_eq!(s.values, vec![3; 4]);
    }

    #[test]
    fn remap_runs_before_reduction() {
        let teacher = ClassScheme::new("t", SourceTag::Teacher, &["Building", "Road", "Crop"]).unwrap();
        let student = ClassScheme::new("s", SourceTag::Student, &["Built-up", "Crop"]).unwrap();
        let table = RemapTable::from_names(
            teacher,
            student,
            &[("Building", "Built-up"), ("Road", "Built-up"), ("Crop", "Crop")],
            None,
        )
        .unwrap();
        let hi = Grid::new(0.0, 2.0, 1.0, 2, 2).unwrap();
        let lo = Grid::new(0.0, 2.0, 2.0, 1, 1).unwrap();
        // Crop is the most frequent teacher class, but Building+Road outnumber it.
        let t = MaskRaster::new(hi, vec![1, 2, 3, 0]).unwrap();
        assert_eq!(teacher_to_student(&t, &lo, 2, 0.5, &table).unwrap().values, vec![1]);
    }

    #[test]
    fn disjoint_extents_are_rejected() {
        let hi = Grid::new(0.0, 10.0, 1.0, 10, 10).unwrap();
        let lo = Grid::new(100.0, 10.0, 5.0, 2, 2).unwrap();
        let err = teacher_to_student(&MaskRaster::filled(hi, 1), &lo, 5, 0.5, &RemapTable::identity(&scheme()));
        assert!(matches!(err, Err(Error::NoOverlap(_))));
    }

    #[test]
    fn fusion_priorities() {
        let g = Grid::new(0.0, 3.0, 1.0, 3, 1).unwrap();
        let manual = MaskRaster::new(g, vec![1, 0, 0]).unwrap();
        let pseudo = MaskRaster::new(g, vec![2, 2, 0]).unwrap();
        assert_eq!(fuse_labels(&[(&manual, 3)]).unwrap(), manual);
        let fused = fuse_labels(&[(&pseudo, 1), (&manual, 3)]).unwrap();
        assert_eq!(fused.values, vec![1, 2, 0]);
        assert_eq!(fuse_labels(&[(&fused, 5), (&fused, 1)]).unwrap(), fused);
    }

    #[test]
    fn fusion_rejects_mismatched_grids() {
        let a = MaskRaster::zeros(Grid::new(0.0, 3.0, 1.0, 3, 1).unwrap());
        let b = MaskRaster::zeros(Grid::new(0.0, 3.0, 1.0, 2, 1).unwrap());
        assert!(matches!(fuse_labels(&[(&a, 1), (&b, 2)]), Err(Error::GridMismatch(_))));
        assert!(fuse_labels(&[]).is_err());
    }
}
