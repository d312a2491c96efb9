//! Hand-written SVG panels for the CSV files the tasks emit. The panel kind
//! is recognized from the header row.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nonbloch_core::dynamics::fit_line;

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A parsed CSV file; `lines[i]` is the 1-based line of `rows[i]`.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub lines: Vec<u64>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| anyhow!("line 1: unreadable header ({e})"))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.iter().all(|h| h.is_empty()) {
            bail!("line 1: missing header");
        }
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                match e.kind() {
                    csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                        anyhow!("line {line}: expected {expected_len} fields, found {len}")
                    }
                    _ => anyhow!("line {line}: {e}"),
                }
            })?;
            lines.push(rec.position().map_or(0, |p| p.line()));
            rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
        }
        Ok(Table { header, rows, lines })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| anyhow!("line 1: missing column '{name}'"))
    }

    /// Numeric column; empty cells read as NaN.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column(name)?;
        self.rows
            .iter()
            .zip(&self.lines)
            .map(|(r, line)| {
                let s = &r[j];
                if s.is_empty() {
                    return Ok(f64::NAN);
                }
                s.parse::<f64>().map_err(|_| anyhow!("line {line}: column '{name}': '{s}' is not a number"))
            })
            .collect()
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    fn has(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.header.iter().any(|h| h == n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Spectrum,
    Gbz,
    Trace,
    Heatmap,
    LambdaV,
    Healing,
    Scan,
    Sweep,
    Thimbles,
}

pub fn detect(t: &Table) -> Result<Kind> {
    let k = if t.has(&["re", "im", "verdict"]) {
        Kind::Scan
    } else if t.has(&["re", "im", "kind"]) {
        Kind::Spectrum
    } else if t.has(&["inner_re", "inner_im", "outer_re", "outer_im"]) {
        Kind::Gbz
    } else if t.has(&["t", "ln_amp_x0", "ln_norm"]) {
        Kind::Trace
    } else if t.has(&["t", "x", "amp"]) {
        Kind::Heatmap
    } else if t.has(&["v", "lambda"]) {
        Kind::LambdaV
    } else if t.has(&["run", "t", "epsilon"]) {
        Kind::Healing
    } else if t.has(&["t1l_im", "t_c_theo", "t_c_num"]) {
        Kind::Sweep
    } else if t.has(&["saddle", "kind", "branch", "k_re", "k_im"]) {
        Kind::Thimbles
    } else {
        bail!("line 1: unrecognized header '{}'", t.header.join(","));
    };
    Ok(k)
}

/// Render one CSV file. `report` is the sibling `report.json`, used for the
/// fit windows of a trace.
pub fn render(text: &str, report: Option<&serde_json::Value>) -> Result<String> {
    let t = Table::parse(text)?;
    match detect(&t)? {
        Kind::Spectrum => spectrum(&t),
        Kind::Gbz => gbz(&t),
        Kind::Trace => trace(&t, report),
        Kind::Heatmap => heatmap(&t),
        Kind::LambdaV => lambda_v(&t),
        Kind::Healing => healing(&t),
        Kind::Scan => scan(&t),
        Kind::Sweep => sweep(&t),
        Kind::Thimbles => thimbles(&t),
    }
}

pub fn render_file(input: &Path, output: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("plot: read {}", input.display()))?;
    let report = input
        .parent()
        .map(|d| d.join("report.json"))
        .filter(|p| p.exists())
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok());
    let svg = render(&text, report.as_ref()).with_context(|| format!("plot: {}", input.display()))?;
    std::fs::write(output, svg).with_context(|| format!("plot: write {}", output.display()))
}

struct Panel {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

fn extent(v: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in v.into_iter().filter(|x| x.is_finite()) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Panel {
    fn new(x: (f64, f64), y: (f64, f64)) -> Panel {
        Panel { x, y, body: String::new() }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64, dash: bool) {
        let mut d = String::new();
        let mut pen = false;
        for &(x, y) in pts {
            if !(x.is_finite() && y.is_finite()) {
                pen = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen { "L" } else { "M" }, self.px(x), self.py(y));
            pen = true;
        }
        if d.is_empty() {
            return;
        }
        let dash = if dash { " stroke-dasharray=\"6,4\"" } else { "" };
        let _ = writeln!(self.body, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash}/>", d.trim_end());
    }

    fn dots(&mut self, pts: &[(f64, f64)], color: &str, r: f64) {
        for &(x, y) in pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(self.body, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{color}\"/>", self.px(x), self.py(y));
        }
    }

    fn label(&mut self, x: f64, y: f64, text: &str, color: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" fill=\"{color}\">{}</text>",
            self.px(x),
            self.py(y),
            esc(text)
        );
    }

    fn legend(&mut self, i: usize, text: &str, color: &str) {
        let y = TOP + 16.0 + 18.0 * i as f64;
        let _ = writeln!(self.body, "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"14\" height=\"4\" fill=\"{color}\"/>", W - RIGHT - 200.0, y - 4.0);
        let _ = writeln!(self.body, "<text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"13\">{}</text>", W - RIGHT - 180.0, esc(text));
    }

    fn finish(self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">");
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(s, "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>", W / 2.0, esc(title));
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y1 - y0);
        for t in nice_ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(s, "<line x1=\"{p:.2}\" y1=\"{y1}\" x2=\"{p:.2}\" y2=\"{}\" stroke=\"black\"/>", y1 + 5.0);
            let _ = writeln!(s, "<text x=\"{p:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>", y1 + 20.0, tick_text(t));
        }
        for t in nice_ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(s, "<line x1=\"{}\" y1=\"{p:.2}\" x2=\"{x0}\" y2=\"{p:.2}\" stroke=\"black\"/>", x0 - 5.0);
            let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{}</text>", x0 - 8.0, p + 4.0, tick_text(t));
        }
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 15.0, esc(xlabel));
        let _ = writeln!(
            s,
            "<text x=\"20\" y=\"{0}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0})\">{1}</text>",
            (y0 + y1) / 2.0,
            esc(ylabel)
        );
        let _ = writeln!(s, "<clipPath id=\"plot\"><rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\"/></clipPath>", x1 - x0, y1 - y0);
        let _ = writeln!(s, "<g clip-path=\"url(#plot)\">");
        s.push_str(&self.body);
        s.push_str("</g>\n</svg>\n");
        s
    }
}

fn tick_text(t: f64) -> String {
    let t = if t.abs() < 1e-12 { 0.0 } else { t };
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn zip(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    a.iter().copied().zip(b.iter().copied()).collect()
}

fn spectrum(t: &Table) -> Result<String> {
    let (re, im, kind) = (t.numbers("re")?, t.numbers("im")?, t.strings("kind")?);
    let mut p = Panel::new(extent(re.iter().copied()), extent(im.iter().copied()));
    let mut kinds: Vec<&str> = Vec::new();
    for k in &kind {
        if !kinds.contains(k) {
            kinds.push(k);
        }
    }
    for (i, k) in kinds.iter().enumerate() {
        let pts: Vec<(f64, f64)> = (0..re.len()).filter(|&j| kind[j] == *k).map(|j| (re[j], im[j])).collect();
        let r = if *k == "point_o" { 5.0 } else { 2.0 };
        p.dots(&pts, PALETTE[i % PALETTE.len()], r);
        p.legend(i, k, PALETTE[i % PALETTE.len()]);
    }
    Ok(p.finish("Spectrum", "Re E", "Im E"))
}

fn gbz(t: &Table) -> Result<String> {
    let inner = zip(&t.numbers("inner_re")?, &t.numbers("inner_im")?);
    let outer = zip(&t.numbers("outer_re")?, &t.numbers("outer_im")?);
    let all = inner.iter().chain(&outer);
    let r = all.clone().map(|p| p.0.abs().max(p.1.abs())).fold(1.0, f64::max) * 1.05;
    let mut p = Panel::new((-r, r), (-r, r));
    let circle: Vec<(f64, f64)> = (0..=360).map(|i| (i as f64).to_radians()).map(|a| (a.cos(), a.sin())).collect();
    p.polyline(&circle, "#999999", 1.0, true);
    p.dots(&inner, PALETTE[0], 2.0);
    p.dots(&outer, PALETTE[1], 2.0);
    p.legend(0, "β_q", PALETTE[0]);
    p.legend(1, "β_q+1", PALETTE[1]);
    Ok(p.finish("Generalized Brillouin zone", "Re β", "Im β"))
}

/// Windows for the two annotated slopes: from `report.json` when present,
/// otherwise fractions of the trace length (span of 20 crossover times).
fn trace_windows(report: Option<&serde_json::Value>, t_end: f64) -> [(f64, f64); 2] {
    let win = |key: &str| {
        let f = report?.get("report")?.get(key)?;
        Some((f.get("t_start")?.as_f64()?, f.get("t_end")?.as_f64()?))
    };
    match (win("lambda_fit"), win("mu_fit")) {
        (Some(a), Some(b)) => [a, b],
        _ => [(0.01 * t_end, 0.025 * t_end), (0.075 * t_end, t_end)],
    }
}

fn trace(t: &Table, report: Option<&serde_json::Value>) -> Result<String> {
    let time = t.numbers("t")?;
    let amp = t.numbers("ln_amp_x0")?;
    let norm = t.numbers("ln_norm")?;
    let y = extent(amp.iter().chain(&norm).copied());
    let mut p = Panel::new(extent(time.iter().copied()), y);
    p.polyline(&zip(&time, &amp), PALETTE[0], 1.5, false);
    p.polyline(&zip(&time, &norm), PALETTE[1], 1.5, false);
    p.legend(0, "ln |ψ(x0, t)|", PALETTE[0]);
    p.legend(1, "ln ‖ψ(t)‖", PALETTE[1]);
    let t_end = time.last().copied().unwrap_or(1.0);
    for (i, (a, b)) in trace_windows(report, t_end).into_iter().enumerate() {
        let Ok(f) = fit_line(&time, &amp, a, b) else { continue };
        let line = [(a, f.slope * a + f.intercept), (b, f.slope * b + f.intercept)];
        p.polyline(&line, "black", 1.0, true);
        let name = if i == 0 { "λ" } else { "μ" };
        let (lx, ly) = (0.5 * (a + b), f.slope * 0.5 * (a + b) + f.intercept + 0.05 * (y.1 - y.0));
        p.label(lx, ly, &format!("{name} = {:.4}", f.slope), "black");
    }
    Ok(p.finish("Edge amplitude and norm", "t", "log amplitude"))
}

fn heat_color(u: f64) -> String {
    // white → dark blue
    let u = u.clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - u)).round() as u8;
    let g = (255.0 * (1.0 - 0.8 * u)).round() as u8;
    let b = (255.0 * (1.0 - 0.45 * u)).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn heatmap(t: &Table) -> Result<String> {
    let (time, x, amp) = (t.numbers("t")?, t.numbers("x")?, t.numbers("amp")?);
    let mut times: Vec<f64> = time.clone();
    times.dedup();
    let xmax = x.iter().copied().fold(0.0, f64::max);
    let tmax = time.iter().copied().fold(0.0, f64::max);
    let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    let mut p = Panel::new((-0.5, xmax + 0.5), (0.0, tmax + dt));
    let amax = amp.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let cw = (p.px(1.0) - p.px(0.0)).abs();
    let ch = (p.py(0.0) - p.py(dt)).abs();
    for i in 0..time.len() {
        let (cx, cy) = (p.px(x[i] - 0.5), p.py(time[i] + dt));
        let col = heat_color(amp[i] / amax);
        let _ = writeln!(p.body, "<rect x=\"{cx:.2}\" y=\"{cy:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{col}\"/>", cw + 0.3, ch + 0.3);
    }
    Ok(p.finish("|ψ(x, t)| (each time normalized)", "site x", "t"))
}

fn lambda_v(t: &Table) -> Result<String> {
    let (v, l) = (t.numbers("v")?, t.numbers("lambda")?);
    let mut p = Panel::new(extent(v.iter().copied()), extent(l.iter().copied()));
    p.polyline(&zip(&v, &l), PALETTE[0], 1.5, false);
    if let Some(i) = (0..l.len()).filter(|&i| l[i].is_finite()).max_by(|&a, &b| l[a].total_cmp(&l[b])) {
        p.dots(&[(v[i], l[i])], PALETTE[1], 5.0);
        p.label(v[i], l[i], &format!("  v_peak = {:.4}, λ = {:.4}", v[i], l[i]), PALETTE[1]);
    }
    Ok(p.finish("λ(v)", "v", "λ"))
}

fn healing(t: &Table) -> Result<String> {
    let run = t.numbers("run")?;
    let time = t.numbers("t")?;
    let ln_eps: Vec<f64> = t.numbers("epsilon")?.iter().map(|e| e.ln()).collect();
    let mut p = Panel::new(extent(time.iter().copied()), extent(ln_eps.iter().copied()));
    let mut runs: Vec<f64> = run.clone();
    runs.dedup();
    for (i, r) in runs.iter().enumerate() {
        let idx: Vec<usize> = (0..run.len()).filter(|&j| run[j] == *r).collect();
        let ts: Vec<f64> = idx.iter().map(|&j| time[j]).collect();
        let ys: Vec<f64> = idx.iter().map(|&j| ln_eps[j]).collect();
        let color = PALETTE[i % PALETTE.len()];
        p.polyline(&zip(&ts, &ys), color, 1.5, false);
        let (a, b) = (ts.first().copied().unwrap_or(0.0), ts.last().copied().unwrap_or(1.0));
        let from = a + 0.5 * (b - a);
        let slope = fit_line(&ts, &ys, from, b).map(|f| format!(", slope {:.3}", f.slope)).unwrap_or_default();
        p.legend(i, &format!("run {r}{slope}"), color);
    }
    Ok(p.finish("Deviation ε(t)", "t", "ln ε"))
}

fn scan(t: &Table) -> Result<String> {
    let (re, im, verdict) = (t.numbers("re")?, t.numbers("im")?, t.strings("verdict")?);
    let mut p = Panel::new(extent(re.iter().copied()), extent(im.iter().copied()));
    for (i, name) in ["heals", "not_healing"].iter().enumerate() {
        let pts: Vec<(f64, f64)> = (0..re.len()).filter(|&j| verdict[j] == *name).map(|j| (re[j], im[j])).collect();
        p.dots(&pts, PALETTE[i + 1], 5.0);
        p.legend(i, name, PALETTE[i + 1]);
    }
    Ok(p.finish("Healing verdicts", "Re E0", "Im E0"))
}

fn sweep(t: &Table) -> Result<String> {
    let x = t.numbers("t1l_im")?;
    let (a, b) = (t.numbers("t_c_theo")?, t.numbers("t_c_num")?);
    let mut p = Panel::new(extent(x.iter().copied()), extent(a.iter().chain(&b).copied()));
    p.polyline(&zip(&x, &a), PALETTE[0], 1.5, false);
    p.dots(&zip(&x, &b), PALETTE[1], 4.0);
    p.legend(0, "t_c (theory)", PALETTE[0]);
    p.legend(1, "t_c (measured)", PALETTE[1]);
    Ok(p.finish("Crossover time", "Im t1L", "t_c"))
}

fn thimbles(t: &Table) -> Result<String> {
    let (s, kind, branch) = (t.numbers("saddle")?, t.strings("kind")?, t.strings("branch")?);
    let (kr, ki) = (t.numbers("k_re")?, t.numbers("k_im")?);
    let mut p = Panel::new(extent(kr.iter().copied()), extent(ki.iter().copied()));
    let mut start = 0;
    while start < s.len() {
        let mut end = start + 1;
        while end < s.len() && s[end] == s[start] && kind[end] == kind[start] && branch[end] == branch[start] {
            end += 1;
        }
        let color = PALETTE[(s[start] as usize + PALETTE.len() - 1) % PALETTE.len()];
        let pts = zip(&kr[start..end], &ki[start..end]);
        p.polyline(&pts, color, 1.5, kind[start] == "descent");
        p.dots(&pts[..1], color, 3.0);
        start = end;
    }
    Ok(p.finish("Ascent (solid) and descent (dashed) paths", "Re k", "Im k"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_rows_report_line_numbers() {
        let e = render("t,ln_amp_x0,ln_norm\n0,1,2\n1,2\n", None).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = render("v,lambda\n0,-1\n0.5,abc\n", None).unwrap_err();
        assert!(e.to_string().contains("line 3") && e.to_string().contains("abc"), "{e}");
        let e = render("a,b\n1,2\n", None).unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
    }

    #[test]
    fn lambda_curve_has_marker_and_axes() {
        let svg = render("v,lambda\n0,-0.5\n0.5,-0.3\n1,-0.4\n", None).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("v_peak = 0.5000"));
        assert!(svg.contains(">λ</text>"));
    }

    #[test]
    fn trace_annotates_two_slopes() {
        let mut text = String::from("t,amp_x0,norm,ln_amp_x0,ln_norm\n");
        for i in 0..=2000 {
            let t = i as f64 * 0.1;
            let y = if t < 10.0 { -0.5 * t } else { -5.0 - 0.1 * (t - 10.0) };
            text += &format!("{t},{},{},{y},{}\n", y.exp(), (0.5 * y).exp(), 0.5 * y);
        }
        let svg = render(&text, None).unwrap();
        assert!(svg.contains("λ = -0.5000"), "{svg}");
        assert!(svg.contains("μ = -0.1000"));
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(tick_text(0.6000000000000001), "0.6");
    }
}
