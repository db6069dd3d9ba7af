use super::{NetworkError, NetworkModel};
use num_complex::Complex64;
use std::io::Write;

/// Dense path matrices of a radial network.
///
/// Column `j` of `bibc` (and row `j` of `bcbv`) refers to bus index `j + 1`;
/// the root bus carries no injection. Currents are load currents: positive
/// when drawn from the bus, so `I_br = BIBC · I_load` flows parent → child and
/// `V_j = V_root − (BCBV · I_br)_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyMatrices {
    pub bibc: Vec<Vec<u8>>,
    pub bcbv: Vec<Vec<Complex64>>,
}

/// Builds BIBC/BCBV with the model's nominal branch impedances.
pub fn build_topology_matrices(model: &NetworkModel) -> Result<TopologyMatrices, NetworkError> {
    let z = model.branch_impedances(&model.nominal_source());
    TopologyMatrices::with_impedances(model, &z)
}

impl TopologyMatrices {
    pub fn with_impedances(model: &NetworkModel, z: &[Complex64]) -> Result<Self, NetworkError> {
        let order = model.validate_radial()?;
        let n = model.n_buses();
        let nb = model.n_branches();
        let mut bibc = vec![vec![0u8; n - 1]; nb];
        let mut bcbv = vec![vec![Complex64::new(0.0, 0.0); nb]; n - 1];
        for j in 1..n {
            for b in order.path_to(j) {
                bibc[b][j - 1] = 1;
                bcbv[j - 1][b] = z[b];
            }
        }
        Ok(Self { bibc, bcbv })
    }

    pub fn branch_currents(&self, load_currents: &[Complex64]) -> Vec<Complex64> {
        self.bibc
            .iter()
            .map(|row| row.iter().zip(load_currents).filter(|(&m, _)| m == 1).map(|(_, &i)| i).sum())
            .collect()
    }

    pub fn voltage_drops(&self, branch_currents: &[Complex64]) -> Vec<Complex64> {
        self.bcbv.iter().map(|row| row.iter().zip(branch_currents).map(|(z, i)| z * i).sum()).collect()
    }

    /// Writes BIBC then BCBV as CSV blocks (`re+imj` for complex entries).
    pub fn write_csv<W: Write>(&self, model: &NetworkModel, out: W) -> Result<(), NetworkError> {
        let mut w = csv::Writer::from_writer(out);
        let bus_ids: Vec<String> = model.buses()[1..].iter().map(|b| b.id.to_string()).collect();
        let branch_names: Vec<String> = model.branches().iter().map(|b| b.name.clone()).collect();
        let io = |e: csv::Error| NetworkError::Io(std::io::Error::other(e));

        let mut header = vec!["BIBC".to_string()];
        header.extend(bus_ids.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (name, row) in branch_names.iter().zip(&self.bibc) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u8::to_string));
            w.write_record(&rec).map_err(io)?;
        }

        // csv::Writer requires equal-length records unless flexible; start a new block.
        let mut out = w.into_inner().map_err(|e| NetworkError::Io(std::io::Error::other(e.to_string())))?;
        writeln!(out)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["BCBV".to_string()];
        header.extend(branch_names.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (id, row) in bus_ids.iter().zip(&self.bcbv) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|z| format!("{}{:+}j", z.re, z.im)));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::chain;
    use super::*;

    #[test]
    fn two_bus_bibc_is_one() {
        let m = chain(1, Complex64::new(0.01, 0.02));
        let t = build_topology_matrices(&m).unwrap();
        assert_eq!(t.bibc, vec![vec![1]]);
    }

    #[test]
    fn three_bus_chain_matrices() {
        let z = Complex64::new(0.01, 0.02);
        let m = chain(2, z);
        let t = build_topology_matrices(&m).unwrap();
        assert_eq!(t.bibc, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(t.bcbv[1], vec![z, z]);
        assert_eq!(t.bcbv[0], vec![z, Complex64::new(0.0, 0.0)]);
    }

    #[test]
    fn csv_export_has_both_blocks() {
        let m = chain(2, Complex64::new(0.01, 0.02));
        let t = build_topology_matrices(&m).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&m, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("BIBC,1,2\nb1,1,1\nb2,0,1\n\nBCBV,b1,b2\n"));
        assert!(s.contains("2,0.01+0.02j,0.01+0.02j"));
    }
}
