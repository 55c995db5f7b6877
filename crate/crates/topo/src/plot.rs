use std::path::Path;

use plotters::prelude::*;

use crate::TopoError;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn plot_err<E: std::fmt::Display>(e: E) -> TopoError {
    TopoError::Plot(e.to_string())
}

/// Line chart with y in [0, 1] (cover fractions). `log_x` uses a
/// logarithmic x axis, which needs strictly positive x values.
pub fn line_chart(path: &Path, title: &str, x_label: &str, series: &[Series], log_x: bool) -> Result<(), TopoError> {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    if !lo.is_finite() {
        return Err(TopoError::Plot("no points".into()));
    }
    if log_x && lo <= 0.0 {
        return Err(TopoError::Plot("log axis needs positive x".into()));
    }
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50);
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(x_label)
                .y_desc("median cover")
                .draw()
                .map_err(plot_err)?;
            for (i, s) in series.iter().enumerate() {
                let c = COLORS[i % COLORS.len()];
                chart
                    .draw_series(LineSeries::new(s.points.iter().copied(), c.stroke_width(2)))
                    .map_err(plot_err)?
                    .label(s.label.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
        }};
    }
    if log_x {
        draw!(builder.build_cartesian_2d((lo..hi).log_scale(), 0.0..1.05).map_err(plot_err)?);
    } else {
        draw!(builder.build_cartesian_2d(lo..hi, 0.0..1.05).map_err(plot_err)?);
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
