use mmie_data::{BBox, Region};

use crate::error::{MetricError, Result};
use crate::prf::{Counts, Prf};

/// Minimum IoU (exclusive) for a true positive.
pub const IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union of two center-format boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    // areas from the same corners, so that iou(b, b) is exactly 1
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn check_boxes(regions: &[Region], side: &'static str) -> Result<()> {
    match regions.iter().find(|r| !r.bbox().is_valid()) {
        None => Ok(()),
        Some(r) => Err(MetricError::InvalidBox {
            side,
            frame: r.frame,
            cx: r.cx,
            cy: r.cy,
            w: r.w,
            h: r.h,
        }),
    }
}

/// Pairs `(pred, gold)` chosen greedily by descending IoU within each frame
/// among pairs that qualify (same frame, same type, IoU above threshold).
/// Ties go to the lower prediction index, then the lower gold index.
pub fn match_regions(gold: &[Region], pred: &[Region]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pr) in pred.iter().enumerate() {
        for (g, gr) in gold.iter().enumerate() {
            if pr.frame != gr.frame || pr.vtype != gr.vtype {
                continue;
            }
            let v = iou(&pr.bbox(), &gr.bbox());
            if v > IOU_THRESHOLD {
                candidates.push((v, p, g));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_p, mut used_g) = (vec![false; pred.len()], vec![false; gold.len()]);
    let mut out = Vec::new();
    for (_, p, g) in candidates {
        if !used_p[p] && !used_g[g] {
            used_p[p] = true;
            used_g[g] = true;
            out.push((p, g));
        }
    }
    out.sort_unstable();
    out
}

pub fn grounding_counts(gold: &[Region], pred: &[Region]) -> Result<Counts> {
    check_boxes(gold, "gold")?;
    check_boxes(pred, "predicted")?;
    Ok(Counts::matched(match_regions(gold, pred).len(), pred.len(), gold.len()))
}

pub fn grounding_f1(gold: &[Region], pred: &[Region]) -> Result<Prf> {
    Ok(Prf::from_counts(grounding_counts(gold, pred)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmie_data::GroundingType;

    fn region(frame: usize, vtype: GroundingType, b: [f64; 4]) -> Region {
        Region { frame, vtype, cx: b[0], cy: b[1], w: b[2], h: b[3] }
    }

    #[test]
    fn identical_box_is_tp() {
        let r = [region(0, GroundingType::Per, [0.3, 0.4, 0.2, 0.5])];
        assert_eq!(iou(&r[0].bbox(), &r[0].bbox()), 1.0);
        assert_eq!(grounding_counts(&r, &r).unwrap().tp, 1);
    }

    #[test]
    fn quarter_overlap() {
        let p = region(0, GroundingType::Per, [0.5, 0.5, 0.5, 0.5]);
        let g = region(0, GroundingType::Per, [0.5, 0.5, 0.25, 0.25]);
        assert!((iou(&p.bbox(), &g.bbox()) - 0.25).abs() < 1e-15);
        assert_eq!(grounding_counts(&[g], &[p]).unwrap(), Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn wrong_type_or_frame_is_fp_and_fn() {
        let g = region(0, GroundingType::Per, [0.5, 0.5, 0.4, 0.4]);
        let mut p = g;
        p.vtype = GroundingType::Org;
        assert_eq!(grounding_counts(&[g], &[p]).unwrap(), Counts { tp: 0, fp: 1, fn_: 1 });
        let mut p = g;
        p.frame = 1;
        assert_eq!(grounding_counts(&[g], &[p]).unwrap().tp, 0);
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 0.5: [0,0.5]x[0,1] vs [0,1]x[0,1]
        let g = region(0, GroundingType::Loc, [0.5, 0.5, 1.0, 1.0]);
        let p = region(0, GroundingType::Loc, [0.25, 0.5, 0.5, 1.0]);
        assert_eq!(iou(&p.bbox(), &g.bbox()), 0.5);
        assert_eq!(grounding_counts(&[g], &[p]).unwrap().tp, 0);
    }

    #[test]
    fn invalid_box_is_rejected() {
        let g = region(0, GroundingType::Loc, [0.9, 0.5, 0.5, 0.2]);
        assert!(grounding_counts(&[g], &[]).is_err());
    }
}
