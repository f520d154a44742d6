use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::{Assignment, JointTable, Schema, Variable};

/// Rows of cause assignments, stored as support indices in schema order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<usize>>,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<usize>>, seed: Option<u64>) -> Result<Self> {
        for row in &rows {
            if row.len() != schema.len() {
                return Err(Error::Config(format!(
                    "row has {} values, schema has {} variables",
                    row.len(),
                    schema.len()
                )));
            }
            for (v, &l) in schema.variables().iter().zip(row) {
                if l >= v.support.len() {
                    return Err(Error::UnknownOutcome {
                        var: v.name.clone(),
                        label: l.to_string(),
                    });
                }
            }
        }
        Ok(Dataset { schema, rows, seed })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Seed the rows were drawn with, if simulated.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn row_assignment(&self, i: usize) -> Assignment {
        Assignment::from_pairs(
            self.schema
                .variables()
                .iter()
                .zip(&self.rows[i])
                .map(|(v, &l)| (v.name.clone(), v.support[l].clone())),
        )
    }

    /// Distinct rows with their multiplicities, in canonical order.
    pub fn pattern_counts(&self) -> BTreeMap<Vec<usize>, u64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Splits into the first `at` rows and the rest.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let at = at.min(self.rows.len());
        (
            Dataset {
                schema: self.schema.clone(),
                rows: self.rows[..at].to_vec(),
                seed: self.seed,
            },
            Dataset {
                schema: self.schema.clone(),
                rows: self.rows[at..].to_vec(),
                seed: self.seed,
            },
        )
    }

    /// CSV with a header of variable names and one outcome label per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.names())?;
        for r in &self.rows {
            w.write_record(
                self.schema
                    .variables()
                    .iter()
                    .zip(r)
                    .map(|(v, &l)| v.support[l].as_str()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads CSV rows. With no schema, supports are the distinct labels seen
    /// in each column, sorted.
    pub fn read_csv<R: Read>(input: R, schema: Option<&Schema>) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = Vec::new();
        for rec in rdr.records() {
            raw.push(rec?.iter().map(str::to_string).collect());
        }
        let schema = match schema {
            Some(s) => {
                let names: Vec<&str> = s.names().collect();
                if names != header {
                    return Err(Error::Config(format!("CSV header {header:?} does not match schema {names:?}")));
                }
                s.clone()
            }
            None => {
                let vars = header
                    .iter()
                    .enumerate()
                    .map(|(j, name)| {
                        let mut labels: Vec<String> = raw.iter().map(|r| r[j].clone()).collect();
                        labels.sort();
                        labels.dedup();
                        Variable::new(name.clone(), labels)
                    })
                    .collect();
                Schema::new(vars)?
            }
        };
        let rows = raw
            .iter()
            .map(|r| {
                schema
                    .variables()
                    .iter()
                    .zip(r)
                    .map(|(v, label)| {
                        v.label_index(label).ok_or_else(|| Error::UnknownOutcome {
                            var: v.name.clone(),
                            label: label.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(schema, rows, None)
    }
}

/// `n` i.i.d. draws from the marginal of `table` over `vars`; deterministic given `seed`.
pub fn simulate_samples<I, S>(table: &JointTable, vars: I, n: usize, seed: u64) -> Result<Dataset>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let marginal = table.marginal(vars)?;
    let cells: Vec<Vec<usize>> = marginal.entries().map(|(k, _)| k.to_vec()).collect();
    let weights: Vec<f64> = marginal.entries().map(|(_, p)| p.to_f64()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n).map(|_| cells[dist.sample(&mut rng)].clone()).collect();
    Dataset::new(marginal.schema().clone(), rows, Some(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;

    fn point_mass() -> JointTable {
        JointTable::single(Variable::new("X", ["a", "b"]), &[Rational::zero(), Rational::one()]).unwrap()
    }

    #[test]
    fn point_mass_gives_identical_rows() {
        let d = simulate_samples(&point_mass(), ["X"], 50, 3).unwrap();
        assert_eq!(d.len(), 50);
        assert!(d.rows().iter().all(|r| r == &vec![1]));
        assert_eq!(d.seed(), Some(3));
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(simulate_samples(&point_mass(), ["X"], 0, 0).is_err());
        assert!(matches!(
            simulate_samples(&point_mass(), ["Y"], 1, 0),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = JointTable::single(Variable::new("X", ["a", "b"]), &[Rational::new(1, 2), Rational::new(1, 2)])
            .unwrap()
            .extend_independent(Variable::new("Y", ["0", "1", "2"]), &vec![Rational::new(1, 3); 3])
            .unwrap();
        let d = simulate_samples(&t, ["X", "Y"], 40, 9).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("X,Y\n"));
        let back = Dataset::read_csv(buf.as_slice(), Some(d.schema())).unwrap();
        assert_eq!(back.rows(), d.rows());
        let inferred = Dataset::read_csv(buf.as_slice(), None).unwrap();
        assert_eq!(inferred.len(), 40);
    }

    #[test]
    fn csv_header_and_labels_checked() {
        let schema = Schema::binary(&["X"]);
        assert!(Dataset::read_csv("Y\n0\n".as_bytes(), Some(&schema)).is_err());
        assert!(Dataset::read_csv("X\n7\n".as_bytes(), Some(&schema)).is_err());
    }
}
