//! Classification of observed units into components, standalone treatments
//! and collapsed multi-unit treatments.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::network::{Network, TreatmentLabel, Unit};

/// The parameter structure implied by the observed treatments.
///
/// The parameter axis is `components ++ standalone ++ collapsed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentCatalog {
    components: Vec<Unit>,
    standalone: Vec<TreatmentLabel>,
    collapsed: Vec<TreatmentLabel>,
    treatments: Vec<TreatmentLabel>,
}

impl ComponentCatalog {
    pub fn components(&self) -> &[Unit] {
        &self.components
    }

    pub fn standalone(&self) -> &[TreatmentLabel] {
        &self.standalone
    }

    pub fn collapsed(&self) -> &[TreatmentLabel] {
        &self.collapsed
    }

    /// Observed treatments, ordered by unit count and then canonical label.
    pub fn treatments(&self) -> &[TreatmentLabel] {
        &self.treatments
    }

    pub fn is_component(&self, unit: &Unit) -> bool {
        self.components.binary_search(unit).is_ok()
    }

    /// Labels of the additive parameters (no interactions).
    pub fn base_parameter_labels(&self) -> Vec<String> {
        self.components
            .iter()
            .map(|u| u.to_string())
            .chain(self.standalone.iter().map(|t| t.to_string()))
            .chain(self.collapsed.iter().map(|t| t.to_string()))
            .collect()
    }

    pub fn treatment_index(&self, label: &TreatmentLabel) -> Option<usize> {
        self.treatments.iter().position(|t| t == label)
    }

    /// Looks up an observed treatment by label, keeping its observed display form.
    pub fn observed(&self, label: &TreatmentLabel) -> Option<&TreatmentLabel> {
        self.treatments.iter().find(|t| *t == label)
    }
}

/// Derives the component catalog by a monotone fixpoint.
///
/// A unit seen in two or more distinct treatments is a component. Any unit
/// sharing a multi-unit treatment with a component becomes a component too,
/// until nothing changes. Remaining single-unit treatments are standalone and
/// remaining multi-unit treatments are collapsed into one parameter each.
pub fn derive_component_catalog(network: &Network) -> ComponentCatalog {
    let observed = network.observed_treatments();

    let mut appearances: BTreeMap<&Unit, usize> = BTreeMap::new();
    for t in &observed {
        for u in t.unit_set() {
            *appearances.entry(u).or_default() += 1;
        }
    }
    let mut components: BTreeSet<Unit> = appearances
        .iter()
        .filter(|(_, &n)| n >= 2)
        .map(|(u, _)| (*u).clone())
        .collect();

    loop {
        let mut changed = false;
        for t in observed.iter().filter(|t| t.len() > 1) {
            if t.unit_set().iter().any(|u| components.contains(u)) {
                for u in t.unit_set() {
                    changed |= components.insert(u.clone());
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut standalone: Vec<TreatmentLabel> = Vec::new();
    let mut collapsed: Vec<TreatmentLabel> = Vec::new();
    for t in &observed {
        if t.unit_set().iter().all(|u| !components.contains(u)) {
            if t.is_single() {
                standalone.push(t.clone());
            } else {
                collapsed.push(t.clone());
            }
        }
    }
    standalone.sort_by_key(|t| t.canonical());
    collapsed.sort_by_key(|t| t.canonical());

    let mut treatments = observed;
    treatments.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.canonical().cmp(&b.canonical()))
    });

    ComponentCatalog {
        components: components.into_iter().collect(),
        standalone,
        collapsed,
        treatments,
    }
}
