//! Containment certificates: an annulus of positive-feedback boxes whose
//! cores separate a seed component from the window boundary.
//!
//! A closed l-inf shell of box indices is a valid separating annulus: cores
//! partition the lattice and the core index of a site changes by at most one
//! per axis along a lattice step, so any path from inside the shell to
//! outside must visit a core of the shell. The check scans shells around the
//! origin's core for one whose boxes all carry positive feedback.

use super::{Feedback, MultiscaleError, ReportTable};
use crate::engine::{Process, RunResult};
use crate::lattice::{BoxIndex, ScaleTable, Site};

#[derive(Debug, Clone, PartialEq)]
pub enum AnnulusVerdict {
    /// A separating annulus of positive-feedback boxes exists.
    Contained { annulus: Vec<BoxIndex> },
    /// The rate-lambda process reached the window boundary; no separation is
    /// possible.
    NotContained,
    /// No certificate either way.
    Indeterminate,
}

/// Attempt to certify that the seed component is ringed by positive-feedback
/// scale-1 boxes separating it from the window boundary.
pub fn annulus_check(
    run: &RunResult,
    reports: &ReportTable,
    st: &ScaleTable,
    seed_component: &[Site],
) -> Result<AnnulusVerdict, MultiscaleError> {
    if seed_component.is_empty() {
        return Ok(AnnulusVerdict::Contained {
            annulus: Vec::new(),
        });
    }
    if run.touches_window_boundary(Process::FppLambda) {
        return Ok(AnnulusVerdict::NotContained);
    }
    // Innermost shell radius: strictly outside every core the component
    // touches.
    let mut rho_min = 0i64;
    for s in seed_component {
        let idx = st.core_index_containing(s, 1)?;
        let r = idx.i.iter().map(|c| c.abs()).max().unwrap_or(0);
        rho_min = rho_min.max(r + 1);
    }
    // Outermost shell radius: every shell box must be classified; take the
    // largest radius for which the full shell has reports.
    let mut rho_max = rho_min - 1;
    'outer: loop {
        let cand = rho_max + 1;
        for idx in shell_indices(st.dim(), cand) {
            if reports.get(1, &idx).is_none() {
                break 'outer;
            }
        }
        rho_max = cand;
    }
    for rho in rho_min..=rho_max {
        let shell = shell_indices(st.dim(), rho);
        if shell
            .iter()
            .all(|i| reports.get(1, i).map(|r| r.feedback == Some(Feedback::Positive)) == Some(true))
        {
            return Ok(AnnulusVerdict::Contained {
                annulus: shell.into_iter().map(|i| BoxIndex::new(1, i)).collect(),
            });
        }
    }
    Ok(AnnulusVerdict::Indeterminate)
}

/// All index vectors with l-inf norm exactly `rho`.
fn shell_indices(d: usize, rho: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cursor = vec![-rho; d];
    loop {
        if cursor.iter().map(|c| c.abs()).max().unwrap() == rho {
            out.push(cursor.clone());
        }
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            if cursor[a] < rho {
                cursor[a] += 1;
                break;
            }
            cursor[a] = -rho;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shells_have_correct_cardinality() {
        // |shell(rho)| = (2 rho + 1)^d - (2 rho - 1)^d.
        assert_eq!(shell_indices(2, 1).len(), 8);
        assert_eq!(shell_indices(2, 2).len(), 16);
        assert_eq!(shell_indices(3, 1).len(), 26);
    }
}
