//! Shared fixtures for the exploration benchmarks: the synthetic tabular
//! task with a trained logistic model and a lookup table.

use std::sync::Arc;

use evgraph_core::model::train::{train_builtin, TrainParams};
use evgraph_core::ranking::lookup::train_lookup_table;
use evgraph_core::synth::{self, SynthParams};
use evgraph_core::{
    BeamParams, BuiltinModel, EdgeWeightTable, Explorer, FeatureExtractor, InputModel, InputState, LogisticModel,
    ModelHandle, Objective, Ranker, Registry, Scorer, SearchParams,
};

pub struct Fixture {
    pub input_model: Arc<InputModel>,
    pub extractor: Arc<dyn FeatureExtractor>,
    pub model: Arc<ModelHandle>,
    pub states: Vec<InputState>,
    pub table: Arc<EdgeWeightTable>,
}

impl Fixture {
    /// `rows` synthetic rows; the model is trained on them and the lookup
    /// table is built from the first 100.
    pub fn new(rows: usize, seed: u64) -> Self {
        let data = SynthParams::default().generate(rows, seed);
        let extractor: Arc<dyn FeatureExtractor> = Arc::new(synth::encoder());
        let x: Vec<Vec<f64>> = data.states.iter().map(|s| extractor.extract(s).unwrap()).collect();
        let mut lr = BuiltinModel::Logistic(LogisticModel::zeros(extractor.output_dim(), 2));
        let params = TrainParams {
            epochs: 10,
            lr: 0.1,
            batch_size: 32,
            l2: 0.0,
            seed,
        };
        train_builtin(&mut lr, &x, &data.labels, &params).unwrap();
        let model = Arc::new(ModelHandle::builtin(lr));
        let input_model = Arc::new(InputModel::from_specs(&synth::transformer_specs(), &Registry::with_builtins()).unwrap());
        let table = train_lookup_table(
            &data.states[..data.states.len().min(100)],
            &input_model,
            |s| Objective::for_sample(&Scorer::classifier_loss(), model.clone(), extractor.clone(), s, None, None),
            |_, _| {},
        )
        .unwrap();
        Fixture {
            input_model,
            extractor,
            model,
            states: data.states,
            table: Arc::new(table),
        }
    }

    pub fn objective(&self, state: &InputState) -> Objective {
        Objective::for_sample(&Scorer::classifier_loss(), self.model.clone(), self.extractor.clone(), state, None, None)
            .unwrap()
    }

    pub fn explorer(&self, ranker: Ranker, width: usize, depth: usize) -> Explorer {
        Explorer::new(
            self.input_model.clone(),
            Scorer::classifier_loss(),
            ranker,
            SearchParams::BeamSearch(BeamParams { width, depth }),
            self.extractor.clone(),
        )
        .unwrap()
    }
}
