//! Plain-text data matrices: a first line `p,n`, then `p` rows of `n`
//! comma-separated values (row-major).

use std::fs;
use std::io::Write;
use std::path::Path;

use anderson_core::{DMatrix, TylerProblem};
use anyhow::{bail, Context};

pub fn write_data_csv(path: &Path, prob: &TylerProblem) -> anyhow::Result<()> {
    let x = prob.data();
    let mut out = String::new();
    out.push_str(&format!("{},{}\n", x.nrows(), x.ncols()));
    for r in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|c| format!("{:?}", x[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn parse_data_csv(text: &str) -> anyhow::Result<TylerProblem> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty data file")?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .context("first line must be `p,n`")?;
    let [p, n] = dims[..] else {
        bail!("first line must be `p,n`");
    };
    let mut values = Vec::with_capacity(p * n);
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad number on data row {}", i + 1))?;
        if row.len() != n {
            bail!("data row {} has {} values, expected {n}", i + 1, row.len());
        }
        values.extend(row);
    }
    if values.len() != p * n {
        bail!("expected {p} data rows, found {}", values.len() / n.max(1));
    }
    Ok(TylerProblem::new(DMatrix::from_row_slice(p, n, &values))?)
}

pub fn read_data_csv(path: &Path) -> anyhow::Result<TylerProblem> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_data_csv(&text).with_context(|| format!("parsing {}", path.display()))
}
