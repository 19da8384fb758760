//! Static SVG line plots written next to the CSV tables.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

/// Longer series are drawn as bare lines.
const MAX_MARKERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn map(self, v: f64) -> Option<f64> {
        let m = match self {
            Scale::Linear => v,
            Scale::Log if v > 0.0 => v.log10(),
            Scale::Log => return None,
        };
        m.is_finite().then_some(m)
    }

    fn label(self, v: f64) -> String {
        match self {
            Scale::Linear if v == 0.0 || (1e-2..1e4).contains(&v.abs()) => format!("{v:.3}"),
            Scale::Linear => format!("{v:.2e}"),
            Scale::Log => format!("1e{v:.1}"),
        }
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self { name: name.into(), points: points.into_iter().collect() }
    }
}

pub struct Figure<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

fn span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    Some((lo - pad, hi + pad))
}

impl Figure<'_> {
    /// Points that cannot be shown on the chosen scales (non-positive on a
    /// log axis, NaN) are dropped. Nothing is written if no point is left.
    pub fn write(&self, path: &Path, series: &[Series]) -> Result<bool> {
        let mapped: Vec<(String, Vec<(f64, f64)>)> = series
            .iter()
            .map(|s| {
                let pts =
                    s.points.iter().filter_map(|&(x, y)| Some((self.x_scale.map(x)?, self.y_scale.map(y)?))).collect();
                (s.name.clone(), pts)
            })
            .collect();
        let all = || mapped.iter().flat_map(|(_, p)| p.iter());
        let (Some(xr), Some(yr)) = (span(all().map(|p| p.0)), span(all().map(|p| p.1))) else {
            return Ok(false);
        };
        let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
        let err = |e: &dyn std::fmt::Display| anyhow!("plot {}: {e}", path.display());
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(self.title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(44)
            .y_label_area_size(72)
            .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
            .map_err(|e| err(&e))?;
        let (xs, ys) = (self.x_scale, self.y_scale);
        chart
            .configure_mesh()
            .x_desc(self.x_label)
            .y_desc(self.y_label)
            .x_label_formatter(&|v| xs.label(*v))
            .y_label_formatter(&|v| ys.label(*v))
            .draw()
            .map_err(|e| err(&e))?;
        for (i, (name, pts)) in mapped.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| err(&e))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            if pts.len() <= MAX_MARKERS {
                chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(|e| err(&e))?;
            }
        }
        if mapped.len() > 1 {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.85))
                .border_style(BLACK)
                .draw()
                .map_err(|e| err(&e))?;
        }
        root.present().map_err(|e| err(&e))?;
        Ok(true)
    }
}
