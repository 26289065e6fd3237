//! Writer for the text LP format read by common MILP solvers.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::model::{ProblemInstance, Variant};

const TERMS_PER_LINE: usize = 8;

fn tau(u: usize, t: usize) -> String {
    format!("tau_u{u}_t{t}")
}

fn alpha(u: usize, t: usize) -> String {
    format!("alpha_u{u}_t{t}")
}

fn beta(t: usize) -> String {
    format!("beta_t{t}")
}

fn gamma(u: usize) -> String {
    format!("gamma_u{u}")
}

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('e') { format!("{v:.12}") } else { s }
}

/// Linear expression with line breaks so no line gets too long.
fn expr(terms: &[(f64, String)]) -> String {
    let mut out = String::new();
    for (i, (c, name)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if *c < 0.0 { "-" } else { "+" };
        if i == 0 && *c >= 0.0 {
            let _ = write!(out, "{} {}", num(c.abs()), name);
        } else {
            let _ = write!(out, " {sign} {} {}", num(c.abs()), name);
        }
    }
    if out.is_empty() { "0 dummy_zero".to_string() } else { out }
}

/// Writes the full model: objective, linking, survival, demand, budget,
/// count and fairness rows, bounds and integrality.
pub fn write_lp<W: Write>(inst: &ProblemInstance, mut w: W) -> Result<()> {
    let n = inst.users.len();
    let vars: Vec<Vec<usize>> =
        (0..n).map(|u| inst.user_options(u).iter().map(|o| o.triple).collect()).collect();

    writeln!(w, "\\ representation selection: {} users, {} triples", n, inst.triples.len())?;
    for (t, rep) in inst.triples.iter().enumerate() {
        writeln!(w, "\\ t{t} = {rep}")?;
    }
    for (u, user) in inst.users.iter().enumerate() {
        writeln!(w, "\\ u{u} = user {}", user.id)?;
    }

    writeln!(w, "Maximize")?;
    let obj: Vec<(f64, String)> = (0..n)
        .flat_map(|u| inst.user_options(u).iter().map(move |o| (o.score, tau(u, o.triple))))
        .collect();
    writeln!(w, " obj: {}", expr(&obj))?;

    writeln!(w, "Subject To")?;
    for u in 0..n {
        for &t in &vars[u] {
            writeln!(w, " play_u{u}_t{t}: {} <= 0", expr(&[(1.0, tau(u, t)), (-1.0, alpha(u, t))]))?;
        }
    }
    for u in 0..n {
        for &t in &vars[u] {
            writeln!(w, " act_u{u}_t{t}: {} <= 0", expr(&[(1.0, alpha(u, t)), (-1.0, beta(t))]))?;
        }
    }
    for t in 0..inst.triples.len() {
        let mut terms = vec![(1.0, beta(t))];
        terms.extend((0..n).filter(|u| vars[*u].contains(&t)).map(|u| (-1.0, alpha(u, t))));
        writeln!(w, " use_t{t}: {} <= 0", expr(&terms))?;
    }
    for u in 0..n {
        for (rate, surv) in inst.survival_steps(u) {
            let terms: Vec<(f64, String)> = vars[u]
                .iter()
                .filter(|&&t| inst.triples[t].rate >= rate)
                .map(|&t| (1.0, tau(u, t)))
                .collect();
            writeln!(w, " surv_u{u}_r{rate}: {} <= {}", expr(&terms), num(surv))?;
        }
    }
    for u in 0..n {
        if !vars[u].is_empty() {
            let terms: Vec<(f64, String)> = vars[u].iter().map(|&t| (1.0, tau(u, t))).collect();
            writeln!(w, " demand_u{u}: {} <= 1", expr(&terms))?;
        }
    }
    if let Some(b) = inst.total_budget() {
        let terms: Vec<(f64, String)> = (0..n)
            .flat_map(|u| vars[u].iter().map(move |&t| (inst.triples[t].rate as f64, tau(u, t))))
            .collect();
        writeln!(w, " budget: {} <= {}", expr(&terms), num(b))?;
    }
    let betas: Vec<(f64, String)> = (0..inst.triples.len()).map(|t| (1.0, beta(t))).collect();
    writeln!(w, " count: {} <= {}", expr(&betas), inst.config.max_representations)?;
    let gammas: Vec<(f64, String)> = (0..n).map(|u| (1.0, gamma(u))).collect();
    writeln!(w, " served: {} >= {}", expr(&gammas), num(inst.config.served_fraction * n as f64))?;
    for u in 0..n {
        let mut terms: Vec<(f64, String)> = vars[u].iter().map(|&t| (1.0, tau(u, t))).collect();
        terms.push((-inst.config.min_serving_time, gamma(u)));
        writeln!(w, " mintime_u{u}: {} >= 0", expr(&terms))?;
    }

    writeln!(w, "Bounds")?;
    for u in 0..n {
        for &t in &vars[u] {
            writeln!(w, " 0 <= {} <= 1", tau(u, t))?;
        }
    }
    writeln!(w, "Binaries")?;
    let mut names: Vec<String> = Vec::new();
    for u in 0..n {
        for &t in &vars[u] {
            names.push(alpha(u, t));
            if inst.config.variant == Variant::Binary {
                names.push(tau(u, t));
            }
        }
    }
    names.extend((0..inst.triples.len()).map(beta));
    names.extend((0..n).map(gamma));
    for chunk in names.chunks(TERMS_PER_LINE) {
        writeln!(w, " {}", chunk.join(" "))?;
    }
    writeln!(w, "End")?;
    Ok(())
}

pub fn export_lp(inst: &ProblemInstance, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_lp(inst, &mut w)?;
    w.flush()?;
    Ok(())
}
