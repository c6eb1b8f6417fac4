use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::model::{Dense, SnnModel};
use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix, Metadata};

const INDEX: &str = "index.txt";

impl SnnModel {
    /// Writes every tensor as a matrix file under `dir` plus `index.txt`
    /// (shapes and training metadata). `extra` entries (β, seed, epochs, ...)
    /// are appended to the index verbatim.
    pub fn save(&self, dir: impl AsRef<Path>, extra: &Metadata) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut index = Metadata::new()
            .with("kind", "snn")
            .with("inputs", self.num_inputs())
            .with("m", self.maps_per_input())
            .with("lambda_orth", format!("{:e}", self.lambda_orth))
            .with("head_layers", self.head().len());
        for l in 0..self.num_inputs() {
            let file = format!("maps_{l}.gsm");
            write_matrix(dir.join(&file), self.weight_bank(l))?;
            index.set(&format!("maps_{l}.file"), &file);
            index.set(&format!("maps_{l}.dim"), self.input_dim(l));
            index.set(&format!("maps_{l}.rank"), self.map_rank(l));
        }
        for (i, layer) in self.head().iter().enumerate() {
            let wf = format!("head_{i}_weights.gsm");
            let bf = format!("head_{i}_bias.gsm");
            write_matrix(dir.join(&wf), &layer.weights)?;
            write_matrix(dir.join(&bf), &layer.bias.clone().insert_axis(ndarray::Axis(0)))?;
            index.set(&format!("head_{i}.shape"), format!("{}x{}", layer.weights.nrows(), layer.weights.ncols()));
            index.set(&format!("head_{i}.weights"), &wf);
            index.set(&format!("head_{i}.bias"), &bf);
        }
        for (k, v) in extra.entries() {
            index.set(k, v);
        }
        index.write(dir.join(INDEX))
    }

    /// Reads a model written by [`SnnModel::save`]; returns it with the index.
    pub fn load(dir: impl AsRef<Path>) -> Result<(SnnModel, Metadata)> {
        let dir = dir.as_ref();
        let index_path = dir.join(INDEX);
        let index = Metadata::read(&index_path)?;
        if index.get("kind") != Some("snn") {
            return Err(Error::format(&index_path, "not an SNN archive"));
        }
        let inputs: usize = index.require("inputs", &index_path)?;
        let m: usize = index.require("m", &index_path)?;
        let lambda_orth: f64 = index.require("lambda_orth", &index_path)?;
        let layers: usize = index.require("head_layers", &index_path)?;
        let mut maps = Vec::with_capacity(inputs);
        let mut ranks = Vec::with_capacity(inputs);
        for l in 0..inputs {
            let file: String = index.require(&format!("maps_{l}.file"), &index_path)?;
            let rank: usize = index.require(&format!("maps_{l}.rank"), &index_path)?;
            let bank = read_matrix(dir.join(file))?;
            if rank == 0 || bank.ncols() != m * rank {
                return Err(Error::format(&index_path, format!("weight bank {l} has the wrong width")));
            }
            maps.push(bank);
            ranks.push(rank);
        }
        let mut head = Vec::with_capacity(layers);
        for i in 0..layers {
            let wf: String = index.require(&format!("head_{i}.weights"), &index_path)?;
            let bf: String = index.require(&format!("head_{i}.bias"), &index_path)?;
            let weights = read_matrix(dir.join(wf))?;
            let bias: Array2<f64> = read_matrix(dir.join(bf))?;
            if bias.nrows() != 1 || bias.ncols() != weights.ncols() {
                return Err(Error::format(&index_path, format!("head layer {i} bias shape")));
            }
            head.push(Dense { weights, bias: bias.row(0).to_owned() });
        }
        let expected_in = inputs * m;
        let chained = head.first().is_some_and(|h| h.weights.nrows() == expected_in)
            && head.windows(2).all(|w| w[0].weights.ncols() == w[1].weights.nrows());
        if !chained {
            return Err(Error::format(&index_path, "head layer shapes do not chain"));
        }
        let model = SnnModel { maps, map_ranks: ranks, maps_per_input: m, head, lambda_orth };
        Ok((model, index))
    }
}
