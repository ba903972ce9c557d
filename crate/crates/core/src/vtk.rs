//! Legacy-VTK ASCII structured-grid snapshots of the fluid.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::fluid::{FluidGrid, FluidState};

/// Writes points, velocity vectors and pressure scalars. The axis node and
/// the periodic seam are repeated so the file is a logically rectangular
/// `(N_θ + 1) × (N_ρ + 1) × (N_z + 1)` grid.
pub fn write_snapshot(path: &Path, grid: &FluidGrid, state: &FluidState) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_to(&mut w, grid, state)?;
    w.flush()?;
    Ok(())
}

pub fn write_to(w: &mut impl Write, grid: &FluidGrid, state: &FluidState) -> Result<()> {
    let c = grid.cyl;
    let order: Vec<usize> = (0..=c.n_z)
        .flat_map(|i| (0..=c.n_rho).flat_map(move |j| (0..=c.n_theta).map(move |k| (i, j, k))))
        .map(|(i, j, k)| grid.node(i, j, k))
        .collect();
    let dims = (c.n_theta + 1, c.n_rho + 1, c.n_z + 1);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "meshshell fluid snapshot")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_GRID")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims.0, dims.1, dims.2)?;
    writeln!(w, "POINTS {} double", order.len())?;
    for (idx, &node) in order.iter().enumerate() {
        // Repeated seam points take the seam angle 2π, not 0.
        let k = idx % dims.0;
        let (_, j, _) = grid.ijk(node);
        let (z, r, _) = grid.cylindrical(node);
        let th = c.dtheta() * k as f64;
        let r = if j == 0 { 0.0 } else { r };
        writeln!(w, "{:.12e} {:.12e} {:.12e}", r * th.cos(), r * th.sin(), z)?;
    }
    writeln!(w, "POINT_DATA {}", order.len())?;
    writeln!(w, "VECTORS velocity double")?;
    for &node in &order {
        let u = state.velocity(node);
        writeln!(w, "{:.12e} {:.12e} {:.12e}", u[0], u[1], u[2])?;
    }
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for &node in &order {
        writeln!(w, "{:.12e}", state.p[node])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryField, CylinderRef};

    #[test]
    fn header_and_counts() {
        let cyl = CylinderRef::new(1.0, 2.0, 2, 2, 4).unwrap();
        let g = FluidGrid::new(BoundaryField::zeros(cyl));
        let mut s = FluidState::zeros(&g);
        s.p[0] = 1.5;
        let mut buf = Vec::new();
        write_to(&mut buf, &g, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DIMENSIONS 5 3 3"));
        assert!(text.contains("POINTS 45 double"));
        let lines: Vec<&str> = text.lines().collect();
        let p0 = lines.iter().position(|l| *l == "LOOKUP_TABLE default").unwrap();
        assert_eq!(lines.len(), p0 + 1 + 45);
        assert!(lines[p0 + 1].starts_with("1.5"));
    }
}
