//! Named finite fixtures with their analytic facts attached, so tests and
//! experiments can check computed quantities against closed forms.

use crate::conditional::FiniteHMM;
use crate::linalg::Mat;
use crate::markov::{FiniteChain, ProductChain};
use crate::measure::Categorical;
use crate::{Error, Result};

/// Closed-form facts bundled with a fixture.
#[derive(Debug, Clone, Default)]
pub struct FixtureFacts {
    /// Stationary law when unique and known in closed form.
    pub stationary: Option<Vec<f64>>,
    /// When the worst-pair marginal TV is exactly `2·rate^n`, the rate.
    pub tv_decay_rate: Option<f64>,
    /// Whether the projected (or plain) window laws merge: the dichotomy's
    /// positive side.
    pub locally_ergodic: bool,
    /// For observation models: whether every transition weight is strictly
    /// positive (so conditioning cannot pin the hidden chain).
    pub nondegenerate: Option<bool>,
}

/// A catalog entry: a finite chain, a product of finite chains, or a hidden
/// Markov model, each with its facts.
#[derive(Debug, Clone)]
pub enum Fixture {
    Chain { chain: FiniteChain, facts: FixtureFacts },
    Product { product: ProductChain, facts: FixtureFacts },
    Hmm { hmm: FiniteHMM, facts: FixtureFacts },
}

impl Fixture {
    pub fn facts(&self) -> &FixtureFacts {
        match self {
            Fixture::Chain { facts, .. } => facts,
            Fixture::Product { facts, .. } => facts,
            Fixture::Hmm { facts, .. } => facts,
        }
    }
}

/// Two-state chain that flips with probability `p`: stationary (1/2, 1/2),
/// worst-pair TV exactly `2(1−2p)^n` for p ≤ 1/2.
pub fn two_state_flip(p: f64) -> Result<FiniteChain> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("flip probability {p} outside [0, 1]")));
    }
    FiniteChain::with_stationary(
        Mat::from_rows(&[vec![1.0 - p, p], vec![p, 1.0 - p]])?,
        Categorical::new(vec![0.5, 0.5])?,
    )
}

/// `d` independent flip(p) coordinates as one product chain; single-site
/// projections mix at the single-coordinate rate while the full product
/// mixes slower.
pub fn product_flip(d: usize, p: f64) -> Result<ProductChain> {
    if d == 0 {
        return Err(Error::InvalidInput("product needs at least one coordinate".into()));
    }
    let components = (0..d).map(|_| two_state_flip(p)).collect::<Result<Vec<_>>>()?;
    ProductChain::new(components)
}

/// Deterministic two-cycle: period 2, so window laws from the two starts
/// stay disjoint forever and no merging occurs.
pub fn periodic2() -> FiniteChain {
    FiniteChain::new(Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap()
}

/// Three-state strictly positive chain with strictly positive emissions on
/// three symbols: the well-behaved observation model. Conditioning on any
/// observation record leaves the hidden chain merging.
pub fn mixing3_hmm() -> FiniteHMM {
    let p0 = Mat::from_rows(&[
        vec![0.5, 0.3, 0.2],
        vec![0.2, 0.5, 0.3],
        vec![0.3, 0.2, 0.5],
    ])
    .unwrap();
    let phi = Mat::from_rows(&[
        vec![0.6, 0.25, 0.15],
        vec![0.2, 0.6, 0.2],
        vec![0.15, 0.25, 0.6],
    ])
    .unwrap();
    FiniteHMM::reduced(p0, phi).unwrap()
}

/// Two-state model whose observations reveal the hidden state up to an
/// ε-blur: as ε → 0 the conditional chain pins to the observed symbols, yet
/// for ε > 0 the model stays nondegenerate and forgets in one step.
pub fn revealing_hmm(eps: f64) -> Result<FiniteHMM> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("blur {eps} outside (0, 1)")));
    }
    let p0 = Mat::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]])?;
    let phi = Mat::from_rows(&[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])?;
    FiniteHMM::reduced(p0, phi)
}

/// Observations carry no information (uniform emissions), so every
/// conditional quantity collapses to its unconditional counterpart.
pub fn flat_hmm() -> FiniteHMM {
    let p0 = Mat::from_rows(&[
        vec![0.5, 0.3, 0.2],
        vec![0.2, 0.5, 0.3],
        vec![0.3, 0.2, 0.5],
    ])
    .unwrap();
    let third = 1.0 / 3.0;
    let phi = Mat::from_rows(&[vec![third; 3], vec![third; 3], vec![third; 3]]).unwrap();
    FiniteHMM::reduced(p0, phi).unwrap()
}

/// Counterexample: the observation is the parity of consecutive hidden
/// states (y' = x ⊕ x'), so the whole hidden path is a deterministic
/// function of (z₀, observations). The hidden chain alone mixes, but
/// conditionally on the observations nothing is ever forgotten: the weight
/// tensor vanishes on half its entries.
pub fn parity_degenerate_hmm() -> FiniteHMM {
    let p0 = Mat::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
    let q = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let mut g = vec![0.0; 16];
    for x in 0..2usize {
        for y in 0..2usize {
            for xp in 0..2usize {
                for yp in 0..2usize {
                    if yp == x ^ xp {
                        g[((x * 2 + y) * 2 + xp) * 2 + yp] = 2.0;
                    }
                }
            }
        }
    }
    FiniteHMM::general(p0, q, g).unwrap()
}

/// Look up a catalog fixture by name, with default parameters where the
/// family takes any. Parameterized families also accept an explicit value
/// via [`make_fixture_with`].
pub fn make_fixture(name: &str) -> Result<Fixture> {
    make_fixture_with(name, None)
}

/// As [`make_fixture`], with an optional parameter: flip probability for the
/// flip families, blur for the revealing model. `product_flip` uses the
/// default width 3.
pub fn make_fixture_with(name: &str, param: Option<f64>) -> Result<Fixture> {
    let uniform2 = Some(vec![0.5, 0.5]);
    match name {
        "two_state_flip" => {
            let p = param.unwrap_or(0.25);
            Ok(Fixture::Chain {
                chain: two_state_flip(p)?,
                facts: FixtureFacts {
                    stationary: uniform2,
                    tv_decay_rate: Some((1.0 - 2.0 * p).abs()),
                    locally_ergodic: p > 0.0 && p < 1.0,
                    nondegenerate: None,
                },
            })
        }
        "product_flip" => {
            let p = param.unwrap_or(0.25);
            Ok(Fixture::Product {
                product: product_flip(3, p)?,
                facts: FixtureFacts {
                    stationary: None,
                    tv_decay_rate: Some((1.0 - 2.0 * p).abs()),
                    locally_ergodic: p > 0.0 && p < 1.0,
                    nondegenerate: None,
                },
            })
        }
        "periodic2" => Ok(Fixture::Chain {
            chain: periodic2(),
            facts: FixtureFacts {
                stationary: uniform2,
                tv_decay_rate: None,
                locally_ergodic: false,
                nondegenerate: None,
            },
        }),
        "mixing3_hmm" => Ok(Fixture::Hmm {
            hmm: mixing3_hmm(),
            facts: FixtureFacts {
                stationary: None,
                tv_decay_rate: None,
                locally_ergodic: true,
                nondegenerate: Some(true),
            },
        }),
        "revealing_hmm" => Ok(Fixture::Hmm {
            hmm: revealing_hmm(param.unwrap_or(0.05))?,
            facts: FixtureFacts {
                stationary: None,
                tv_decay_rate: None,
                locally_ergodic: true,
                nondegenerate: Some(true),
            },
        }),
        "flat_hmm" => Ok(Fixture::Hmm {
            hmm: flat_hmm(),
            facts: FixtureFacts {
                stationary: None,
                tv_decay_rate: None,
                locally_ergodic: true,
                nondegenerate: Some(true),
            },
        }),
        "parity_degenerate_hmm" => Ok(Fixture::Hmm {
            hmm: parity_degenerate_hmm(),
            facts: FixtureFacts {
                stationary: None,
                tv_decay_rate: None,
                locally_ergodic: true,
                nondegenerate: Some(false),
            },
        }),
        other => Err(Error::InvalidInput(format!(
            "unknown fixture '{other}'; known: two_state_flip, product_flip, periodic2, \
             mixing3_hmm, revealing_hmm, flat_hmm, parity_degenerate_hmm"
        ))),
    }
}

/// Names accepted by [`make_fixture`], in catalog order.
pub fn fixture_names() -> &'static [&'static str] {
    &[
        "two_state_flip",
        "product_flip",
        "periodic2",
        "mixing3_hmm",
        "revealing_hmm",
        "flat_hmm",
        "parity_degenerate_hmm",
    ]
}
