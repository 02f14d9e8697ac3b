use std::fmt::Write;

use crate::cluster::OUTLIER;
use crate::embedding::EmbeddingMatrix;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 20.0;

fn color(label: i32) -> String {
    if label == OUTLIER {
        return "#b0b0b0".into();
    }
    // golden-angle hue steps keep neighbouring labels apart
    let hue = (label as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},65%,45%)")
}

/// Static scatter of 2-D points, one color per cluster, outliers gray and
/// drawn underneath.
pub fn scatter_svg(points: &EmbeddingMatrix, labels: &[i32]) -> String {
    assert_eq!(points.n_rows(), labels.len());
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if points.n_rows() == 0 || points.dim() < 2 {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points.rows() {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i] != OUTLIER, labels[i], i));
    for i in order {
        let p = points.row(i);
        let x = MARGIN + (p[0] - min_x) / span_x * (WIDTH - 2.0 * MARGIN);
        let y = HEIGHT - MARGIN - (p[1] - min_y) / span_y * (HEIGHT - 2.0 * MARGIN);
        writeln!(
            svg,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"{}\"><title>{}</title></circle>",
            color(labels[i]),
            labels[i]
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outliers_are_gray_and_first() {
        let pts = EmbeddingMatrix::from_points(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.2]]).unwrap();
        let svg = scatter_svg(&pts, &[0, -1, 1]);
        assert_eq!(svg.matches("<circle").count(), 3);
        let gray = svg.find("#b0b0b0").unwrap();
        let first_color = svg.find("hsl(").unwrap();
        assert!(gray < first_color);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
