use serde::Serialize;

use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KgStats {
    pub links: usize,
    pub entities: usize,
    pub entity_types: usize,
    pub relations: usize,
    pub mediated_links: usize,
}

/// Exact counts. `links` covers qualified links and plain triples;
/// `relations` counts distinct relations in use, qualifier relations
/// included.
pub fn kg_stats(kg: &KnowledgeGraph) -> KgStats {
    KgStats {
        links: kg.qlinks().len() + kg.triples().len(),
        entities: kg.entities().len(),
        entity_types: kg.type_entities().len(),
        relations: kg.relations().len(),
        mediated_links: kg.qlinks().iter().filter(|l| !l.qualifiers.is_empty()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CausalNetwork;
    use crate::kg::{build_kg, Variant};

    #[test]
    fn empty_graph_counts_zero() {
        assert_eq!(kg_stats(&KnowledgeGraph::empty(Variant::C, false)), KgStats::default());
    }

    #[test]
    fn single_edge_ct_counts() {
        let net = CausalNetwork::unchecked("n", &[("A", "TA"), ("B", "TB")], &[("A", "B", 3)]);
        let kg = build_kg(&[net], &[vec![]], Variant::CT, false, None).unwrap();
        let s = kg_stats(&kg);
        assert_eq!(s.links, 4 + 2);
        assert_eq!(s.entities, 2 + 2);
        assert_eq!(s.entity_types, 2);
        assert_eq!(s.relations, 5);
        assert_eq!(s.mediated_links, 0);
    }

    #[test]
    fn single_edge_c_has_four_links() {
        let net = CausalNetwork::unchecked("n", &[("A", "TA"), ("B", "TB")], &[("A", "B", 3)]);
        let kg = build_kg(&[net], &[vec![]], Variant::C, false, None).unwrap();
        assert_eq!(kg.qlinks().len(), 4);
        assert!(kg.triples().is_empty());
    }
}
