//! Small hand-built instances with known optimal plans.
#![allow(dead_code)]

use modcap_core::{Instance, ProductSpec, ScenarioTree, TechnologyOption};

pub const SMALL: TechnologyOption = TechnologyOption::new(50.0, 60.0);
pub const LARGE: TechnologyOption = TechnologyOption::new(100.0, 100.0);

fn product(catalog: Vec<TechnologyOption>, storage_cost: f64) -> ProductSpec {
    ProductSpec {
        id: "p".into(),
        catalog,
        storage_cost,
        waste_cost: 1.0,
        operating_cost: 1.0,
        selling_price: 10.0,
        capacity_limit: 200.0,
        storage_limit: 50.0,
    }
}

/// Three known demands 100, 150, 200. With both unit sizes the best plan
/// installs 150 then 50 and wastes nothing; with only the large unit 50 units
/// of excess are unavoidable.
pub fn three_stage_line(catalog: Vec<TechnologyOption>) -> Instance {
    Instance {
        tree: ScenarioTree::deterministic(3).unwrap(),
        products: vec![product(catalog, 0.0)],
        interdependency: vec![vec![0.0]],
        demands: vec![vec![100.0], vec![150.0], vec![200.0]],
        budget_limit: None,
        interest_rate: 0.0,
    }
}

/// Binary tree over three stages, equally likely branches; stage-2 demands
/// 50 and 50, leaf demands 150, 75 (high branch) and 100, 75 (low branch).
pub fn binary_tree(catalog: Vec<TechnologyOption>) -> Instance {
    let demands = [0.0, 50.0, 50.0, 150.0, 75.0, 100.0, 75.0];
    Instance {
        tree: ScenarioTree::build(3, &[2, 2], &[]).unwrap(),
        products: vec![product(catalog, 1.0)],
        interdependency: vec![vec![0.0]],
        demands: demands.iter().map(|&d| vec![d]).collect(),
        budget_limit: None,
        interest_rate: 0.0,
    }
}
