//! Figure-style raster rendering of two-dimensional snapshots: binary
//! portable pixmaps with the rate-1 region coloured by entrance-time
//! quantile band, the rate-lambda region white, and everything else
//! (unoccupied sites and inactive seeds) light gray.

use crate::CliError;
use fpphe_core::engine::{RunResult, SiteState};
use fpphe_core::lattice::Site;

const GRAY: [u8; 3] = [211, 211, 211];
const WHITE: [u8; 3] = [255, 255, 255];

/// Deterministic palette: evenly spaced hues from deep blue to red.
fn band_color(band: u32, bands: u32) -> [u8; 3] {
    let t = if bands <= 1 {
        0.0
    } else {
        band as f64 / (bands - 1) as f64
    };
    // Hue sweep 240 -> 0 degrees at full saturation.
    let h = 240.0 * (1.0 - t);
    let (r, g, b) = hsv_to_rgb(h, 0.85, 0.95);
    [r, g, b]
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    )
}

/// Render a finished 2-d run as a binary P6 pixmap.
pub fn render_ppm(result: &RunResult, bands: u32) -> Result<Vec<u8>, CliError> {
    let window = result.window();
    if window.dim() != 2 {
        return Err(CliError::Usage(format!(
            "rendering requires a 2-dimensional snapshot, got d = {}",
            window.dim()
        )));
    }
    let bands = bands.max(1);
    // Quantile thresholds over the rate-1 entrance times.
    let mut taus: Vec<f64> = Vec::new();
    for (_, rec) in result.records() {
        if rec.state == SiteState::Fpp1 {
            taus.push(rec.entrance_time.unwrap());
        }
    }
    taus.sort_by(f64::total_cmp);

    let side = window.side() as usize;
    let half = window.half_side();
    let mut pixels = Vec::with_capacity(side * side * 3);
    let header = format!("P6\n{side} {side}\n255\n");
    let mut out = header.into_bytes();
    for row in 0..side {
        let y = half - row as i64;
        for col in 0..side {
            let x = col as i64 - half;
            let rec = result.record(&Site(vec![x, y])).unwrap();
            let color = match rec.state {
                SiteState::Fpp1 => {
                    let tau = rec.entrance_time.unwrap();
                    // Rank among all rate-1 entrance times.
                    let rank = taus.partition_point(|&t| t < tau);
                    let band =
                        ((rank as u64 * bands as u64) / taus.len().max(1) as u64) as u32;
                    band_color(band.min(bands - 1), bands)
                }
                SiteState::FppLambda => WHITE,
                SiteState::Empty | SiteState::Seed => GRAY,
            };
            pixels.extend_from_slice(&color);
        }
    }
    out.append(&mut pixels);
    Ok(out)
}
