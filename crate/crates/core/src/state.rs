//! Gridded kinetic state in absolute (`F`) or perturbation (`f`) form,
//! related by `F = mu + sqrt(mu) f`.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::velocity::{Macro, VelocityGrid, WeightParams};
use crate::{BgkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Absolute,
    Perturbation,
}

impl Representation {
    fn tag(self) -> u64 {
        match self {
            Representation::Absolute => 0,
            Representation::Perturbation => 1,
        }
    }

    fn from_tag(tag: u64) -> Result<Self> {
        match tag {
            0 => Ok(Representation::Absolute),
            1 => Ok(Representation::Perturbation),
            t => Err(BgkError::Config(format!("unknown representation tag {t}"))),
        }
    }
}

/// Values indexed `(cell, velocity node)`, cell-major.
#[derive(Debug, Clone)]
pub struct DistributionField {
    grid: Arc<VelocityGrid>,
    n_cells: usize,
    cell_width: f64,
    repr: Representation,
    data: Vec<f64>,
}

impl DistributionField {
    pub fn new(grid: Arc<VelocityGrid>, n_cells: usize, cell_width: f64, repr: Representation, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_cells * grid.len() {
            return Err(BgkError::Config(format!(
                "field has {} values, expected {} cells x {} nodes",
                data.len(),
                n_cells,
                grid.len()
            )));
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(BgkError::NonFinite { index });
        }
        Ok(DistributionField { grid, n_cells, cell_width, repr, data })
    }

    pub fn zeros(grid: Arc<VelocityGrid>, n_cells: usize, cell_width: f64, repr: Representation) -> Self {
        let data = vec![0.0; n_cells * grid.len()];
        DistributionField { grid, n_cells, cell_width, repr, data }
    }

    /// Global Maxwellian in every cell, absolute form.
    pub fn equilibrium(grid: Arc<VelocityGrid>, n_cells: usize, cell_width: f64) -> Self {
        let mut data = Vec::with_capacity(n_cells * grid.len());
        for _ in 0..n_cells {
            data.extend_from_slice(grid.mu());
        }
        DistributionField { grid, n_cells, cell_width, repr: Representation::Absolute, data }
    }

    /// Perturbation field built cell by cell from a closure.
    pub fn from_cells(grid: Arc<VelocityGrid>, n_cells: usize, cell_width: f64, repr: Representation, mut cell: impl FnMut(usize, &mut [f64])) -> Self {
        let nv = grid.len();
        let mut data = vec![0.0; n_cells * nv];
        for (i, chunk) in data.chunks_mut(nv).enumerate() {
            cell(i, chunk);
        }
        DistributionField { grid, n_cells, cell_width, repr, data }
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        let nv = self.grid.len();
        &self.data[i * nv..(i + 1) * nv]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        let nv = self.grid.len();
        &mut self.data[i * nv..(i + 1) * nv]
    }

    pub fn cells(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.grid.len())
    }

    /// Cell-centre coordinate of cell `i`.
    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.cell_width
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `f = (F - mu) / sqrt(mu)`.
    pub fn to_perturbation(&self) -> Result<DistributionField> {
        if self.repr != Representation::Absolute {
            return Err(BgkError::Precondition("to_perturbation expects an absolute field".into()));
        }
        let (mu, smu) = (self.grid.mu(), self.grid.sqrt_mu());
        let mut out = self.clone();
        out.repr = Representation::Perturbation;
        for chunk in out.data.chunks_mut(mu.len()) {
            for ((x, m), s) in chunk.iter_mut().zip(mu).zip(smu) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }

    /// `F = mu + sqrt(mu) f`.
    pub fn to_absolute(&self) -> Result<DistributionField> {
        if self.repr != Representation::Perturbation {
            return Err(BgkError::Precondition("to_absolute expects a perturbation field".into()));
        }
        let (mu, smu) = (self.grid.mu(), self.grid.sqrt_mu());
        let mut out = self.clone();
        out.repr = Representation::Absolute;
        for chunk in out.data.chunks_mut(mu.len()) {
            for ((x, m), s) in chunk.iter_mut().zip(mu).zip(smu) {
                *x = m + s * *x;
            }
        }
        Ok(out)
    }

    /// Total perturbation mass `sum_cells dx <f, chi_0>` (perturbation form),
    /// or `sum_cells dx int (F - mu)` (absolute form).
    pub fn total_perturbation_mass(&self) -> f64 {
        let g = &self.grid;
        let mut acc = crate::velocity::CompensatedSum::default();
        for chunk in self.cells() {
            let a = match self.repr {
                Representation::Perturbation => g.inner(chunk, g.chi(0)),
                Representation::Absolute => {
                    let mut s = crate::velocity::CompensatedSum::default();
                    for ((&q, &x), &m) in g.weights().iter().zip(chunk).zip(g.mu()) {
                        s.add(q * (x - m));
                    }
                    s.value()
                }
            };
            acc.add(a * self.cell_width);
        }
        acc.value()
    }

    /// Total mass `sum_cells dx int F` of an absolute field.
    pub fn total_mass(&self) -> f64 {
        let mut acc = crate::velocity::CompensatedSum::default();
        for chunk in self.cells() {
            acc.add(self.grid.sum(chunk) * self.cell_width);
        }
        acc.value()
    }

    /// Per-cell macroscopic quantities and projection coefficients.
    pub fn macro_fields(&self) -> Result<MacroFields> {
        let (abs, pert) = match self.repr {
            Representation::Absolute => (self.clone(), self.to_perturbation()?),
            Representation::Perturbation => (self.to_absolute()?, self.clone()),
        };
        let mut out = MacroFields::with_capacity(self.n_cells);
        for (i, (fa, fp)) in abs.cells().zip(pert.cells()).enumerate() {
            let m = self.grid.moments(fa).map_err(|e| BgkError::Degenerate(format!("cell {i}: {e}")))?;
            let coeff = self.grid.basis_coefficients(fp);
            out.push(m, coeff);
        }
        Ok(out)
    }

    pub fn write_dump<W: Write>(&self, mut out: W, header: &DumpHeader) -> Result<()> {
        out.write_all(&(self.n_cells as u64).to_le_bytes())?;
        out.write_all(&(self.grid.n_axis() as u64).to_le_bytes())?;
        out.write_all(&self.grid.v_max().to_le_bytes())?;
        out.write_all(&self.repr.tag().to_le_bytes())?;
        let wp = self.grid.weight_params();
        for x in [wp.beta, wp.theta, header.eta, header.omega] {
            out.write_all(&x.to_le_bytes())?;
        }
        for x in &self.data {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`write_dump`](Self::write_dump), rebuilding
    /// the velocity lattice from the header. The cell width is not stored.
    pub fn read_dump<R: Read>(mut input: R, cell_width: f64) -> Result<(DumpHeader, DistributionField)> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let n_cells = u64::from_le_bytes(next(&mut input)?) as usize;
        let n_axis = u64::from_le_bytes(next(&mut input)?) as usize;
        let v_max = f64::from_le_bytes(next(&mut input)?);
        let repr = Representation::from_tag(u64::from_le_bytes(next(&mut input)?))?;
        let beta = f64::from_le_bytes(next(&mut input)?);
        let theta = f64::from_le_bytes(next(&mut input)?);
        let eta = f64::from_le_bytes(next(&mut input)?);
        let omega = f64::from_le_bytes(next(&mut input)?);
        let grid = Arc::new(VelocityGrid::new(n_axis, v_max, WeightParams::new(beta, theta)?)?);
        let mut data = vec![0.0; n_cells * grid.len()];
        for x in data.iter_mut() {
            *x = f64::from_le_bytes(next(&mut input)?);
        }
        let field = DistributionField::new(grid, n_cells, cell_width, repr, data)?;
        Ok((DumpHeader { eta, omega }, field))
    }
}

/// Collision exponents carried in a state dump next to the lattice
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub eta: f64,
    pub omega: f64,
}

/// Per-cell `(rho, U, T)` and projection coefficients `(a, b, c)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroFields {
    pub rho: Vec<f64>,
    pub u: Vec<[f64; 3]>,
    pub temp: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<[f64; 3]>,
    pub c: Vec<f64>,
}

impl MacroFields {
    pub fn with_capacity(n: usize) -> Self {
        MacroFields {
            rho: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            temp: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, m: Macro, coeff: [f64; 5]) {
        self.rho.push(m.rho);
        self.u.push(m.u);
        self.temp.push(m.temp);
        self.a.push(coeff[0]);
        self.b.push([coeff[1], coeff[2], coeff[3]]);
        self.c.push(coeff[4]);
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn state(&self, i: usize) -> Macro {
        Macro { rho: self.rho[i], u: self.u[i], temp: self.temp[i] }
    }
}
