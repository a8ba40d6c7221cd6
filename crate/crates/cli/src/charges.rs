//! Dump of the conserved-charge family.

use gge_core::lattice::{commutator_norm, realize};
use gge_core::pauli::{build_charge_family, h0_density};
use gge_core::SpinChainParams;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, RunRecord, Table};

pub const CHECK_HEADER: [&str; 6] = ["charge", "max_support", "terms", "hermiticity_defect", "comm_h0", "N"];

/// Writes `charges.txt` (one block per charge, `re im offset letters`
/// per line) and `charges_check.csv` with `‖[H0, C]‖_F` on the ring.
pub fn dump(cfg: &RunConfig, n: Option<usize>, count: usize, rec: &mut RunRecord) -> Result<usize, CliError> {
    if count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let p = SpinChainParams {
        n: n.unwrap_or(cfg.model.n),
        ..cfg.model.clone()
    };
    p.validate()?;
    let fam = build_charge_family(&p, count)?;
    let h0 = realize(&h0_density(p.jy, p.jz, p.h), p.n)?;
    let mut text = format!("# J_y = {}, J_z = {}, h = {}\n", p.jy, p.jz, p.h);
    let mut t = Table::new(&CHECK_HEADER);
    for ((idx, q), support) in fam.indices.iter().zip(&fam.charges).zip(&fam.max_support) {
        text.push_str(&format!("# C{idx} support {support}\n"));
        text.push_str(&q.to_text());
        let comm = if *support <= p.n {
            num(commutator_norm(&h0, &realize(q, p.n)?))
        } else {
            String::new()
        };
        t.push(vec![
            format!("C{idx}"),
            support.to_string(),
            q.len().to_string(),
            num(q.hermiticity_defect()),
            comm,
            p.n.to_string(),
        ]);
    }
    rec.write_text("charges.txt", &text)?;
    rec.write_table("charges_check.csv", &t)?;
    Ok(0)
}
