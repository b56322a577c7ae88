//! Built-in simulators selectable by name.

use std::fmt;

use alspce_core::active::AlConfig;
use alspce_core::testbeds::{
    rs_input_model, sir_input_model, toy_input_model, RsSimulator, SirSimulator, StochasticSimulator, ToySimulator,
    SIR_I_LIM,
};
use alspce_core::InputModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Testbed {
    /// stochastic resistance minus load
    Rs,
    /// epidemic final size against a threshold
    Sir,
    /// one-dimensional x·sin(x) plus Gaussian noise
    Toy,
}

impl fmt::Display for Testbed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Testbed::Rs => "rs",
            Testbed::Sir => "sir",
            Testbed::Toy => "toy",
        })
    }
}

impl Testbed {
    pub fn input_model(self) -> InputModel {
        match self {
            Testbed::Rs => rs_input_model(),
            Testbed::Sir => sir_input_model(),
            Testbed::Toy => toy_input_model(),
        }
    }

    pub fn simulator(self, i_lim: Option<f64>) -> Box<dyn StochasticSimulator + Send> {
        match self {
            Testbed::Rs => Box::new(RsSimulator),
            Testbed::Sir => Box::new(SirSimulator { i_lim: i_lim.unwrap_or(SIR_I_LIM) }),
            Testbed::Toy => Box::new(ToySimulator),
        }
    }

    /// The four-dimensional epidemic starts from a larger design and allows
    /// degree 5. The one-dimensional toy gets a smaller candidate set and
    /// room for higher degrees: `x·sin(x)` needs degree 6 or more.
    pub fn default_al_config(self) -> AlConfig {
        let mut c = AlConfig::default();
        match self {
            Testbed::Rs => {}
            Testbed::Sir => {
                c.n_init = 100;
                c.train.degree_max = 5;
            }
            Testbed::Toy => {
                c.n_candidates = 1000;
                c.train.degree_max = 10;
            }
        }
        c
    }
}
