//! Thin wasm-bindgen facade over the simulator core. All functions speak
//! JSON strings so the page needs no generated TypeScript bindings: parse
//! the returned string with `JSON.parse`, edit a config as a plain object,
//! and pass it back with `JSON.stringify`.
//!
//! The exported functions only wrap the `*_impl` versions into `JsError`;
//! the wrapping happens solely on the JS call path because constructing a
//! `JsError` aborts on non-wasm targets, where the impl functions are still
//! unit-testable.

use wasm_bindgen::prelude::*;

use specshare::model::Topology;
use specshare::ScenarioConfig;

/// The repository's tuned five-provider default scenario.
#[wasm_bindgen]
pub fn default_config() -> String {
    include_str!("../../../configs/default.json").to_owned()
}

/// Runs one scenario and returns the full metric report as JSON.
#[wasm_bindgen]
pub fn run_json(config_json: &str) -> Result<String, JsError> {
    run_json_impl(config_json).map_err(|e| JsError::new(&e))
}

/// Geometry of the scenario for drawing: hex cells, sensing nodes with their
/// links, and per-provider base stations.
#[wasm_bindgen]
pub fn topology_json(config_json: &str) -> Result<String, JsError> {
    topology_json_impl(config_json).map_err(|e| JsError::new(&e))
}

fn parse_config(config_json: &str) -> Result<ScenarioConfig, String> {
    ScenarioConfig::from_json_str(config_json).map_err(|e| e.to_string())
}

fn run_json_impl(config_json: &str) -> Result<String, String> {
    let cfg = parse_config(config_json)?;
    let result = specshare::run(&cfg).map_err(|e| e.to_string())?;
    Ok(result.to_json_string())
}

fn topology_json_impl(config_json: &str) -> Result<String, String> {
    let cfg = parse_config(config_json)?;
    let topo = Topology::build(&cfg).map_err(|e| e.to_string())?;
    let payload = serde_json::json!({
        "cell_radius": cfg.cell_radius,
        "cells": topo
            .cells
            .iter()
            .map(|c| serde_json::json!({
                "id": c.id.0,
                "x": c.center.x,
                "y": c.center.y,
            }))
            .collect::<Vec<_>>(),
        "nodes": topo
            .cr_nodes
            .iter()
            .map(|n| serde_json::json!({
                "id": n.id.0,
                "x": n.position.x,
                "y": n.position.y,
                "neighbors": n.neighbors.iter().map(|v| v.0).collect::<Vec<_>>(),
            }))
            .collect::<Vec<_>>(),
        "infras": topo
            .infrastructures
            .iter()
            .map(|i| serde_json::json!({
                "id": i.id.0,
                "provider": i.provider.0,
                "cell": i.cell.0,
                "x": i.position.x,
                "y": i.position.y,
            }))
            .collect::<Vec<_>>(),
    });
    Ok(payload.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = default_config();
        let report = run_json_impl(&cfg).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert!(parsed["aggregate"]["R_BL"].is_number());
    }

    #[test]
    fn topology_payload_draws_the_single_cell() {
        let topo = topology_json_impl(&default_config()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&topo).unwrap();
        assert_eq!(v["cells"].as_array().unwrap().len(), 1);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 6);
        assert_eq!(v["infras"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn bad_config_is_a_readable_error() {
        let err = run_json_impl("{ \"n_providers\": 0 }").unwrap_err();
        assert!(err.contains("n_providers"), "unhelpful error: {err}");
    }
}
