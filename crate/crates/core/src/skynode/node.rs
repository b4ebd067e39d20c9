use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::eval::all_hold;
use super::{
    compile_predicates, CarriedColumn, ColumnSchema, CompiledPredicate, NodeCatalog, NodeError, NodeInformation,
    PartialResultSet, QueryResult, RowSet, SchemaDescription,
};
use crate::portal::{ExecutionPlan, RegistrationRequest, StageRole};
use crate::query::{NodeQuery, Projection};
use crate::sphere::angular_distance;
use crate::wire::{Message, Service, Transport};
use crate::xmatch::{Accumulators, CandidateTuple, Member};

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(120);

/// A catalog node. Built without a catalog it answers every service with
/// `NodeUninitialized`.
pub struct SkyNode {
    catalog: Option<Arc<NodeCatalog>>,
    transport: Arc<dyn Transport>,
    call_timeout: Duration,
    /// Incoming partial results held while a CrossMatch call is processed,
    /// keyed by (correlation id, stage).
    staging: Mutex<HashMap<(u128, u32), Arc<PartialResultSet>>>,
}

struct Staged<'a> {
    node: &'a SkyNode,
    key: (u128, u32),
}

impl Drop for Staged<'_> {
    fn drop(&mut self) {
        self.node.staging.lock().expect("staging poisoned").remove(&self.key);
    }
}

impl SkyNode {
    pub fn new(catalog: NodeCatalog, transport: Arc<dyn Transport>) -> Self {
        SkyNode { catalog: Some(Arc::new(catalog)), ..Self::uninitialized(transport) }
    }

    pub fn uninitialized(transport: Arc<dyn Transport>) -> Self {
        SkyNode { catalog: None, transport, call_timeout: DEFAULT_CALL_TIMEOUT, staging: Mutex::default() }
    }

    pub fn with_call_timeout(mut self, timeout: Duration) -> Self {
        self.call_timeout = timeout;
        self
    }

    pub fn catalog(&self) -> Option<&NodeCatalog> {
        self.catalog.as_deref()
    }

    fn cat(&self) -> Result<&NodeCatalog, NodeError> {
        self.catalog.as_deref().ok_or(NodeError::NodeUninitialized)
    }

    /// Tuples currently held in per-query staging.
    pub fn staged_count(&self) -> usize {
        self.staging.lock().expect("staging poisoned").values().map(|p| p.tuples.len()).sum()
    }

    pub fn svc_information(&self) -> Result<NodeInformation, NodeError> {
        let cat = self.cat()?;
        Ok(NodeInformation {
            archive_name: cat.archive_name().to_string(),
            noise: cat.noise(),
            primary_table: cat.primary_table().to_string(),
        })
    }

    pub fn svc_metadata(&self) -> Result<SchemaDescription, NodeError> {
        Ok(self.cat()?.schema_description())
    }

    fn check_table(cat: &NodeCatalog, q: &NodeQuery) -> Result<(), NodeError> {
        if q.table != cat.primary_table() {
            return Err(NodeError::UnknownTable(q.table.clone()));
        }
        Ok(())
    }

    /// Rows inside the AREA that satisfy `preds`, ascending by row.
    fn matching_rows(cat: &NodeCatalog, q: &NodeQuery, preds: &[CompiledPredicate]) -> Vec<usize> {
        let (center, radius) = q.area.circle();
        let filter = |r: usize| all_hold(preds, cat, r);
        cat.index().range_search(&center, radius, Some(&filter))
    }

    pub fn svc_query(&self, q: &NodeQuery) -> Result<QueryResult, NodeError> {
        let cat = self.cat()?;
        Self::check_table(cat, q)?;
        let preds = compile_predicates(&q.predicates, &q.alias, cat)?;
        let columns = match &q.projection {
            Projection::CountStar => None,
            Projection::Columns(cols) => Some(
                cols.iter()
                    .map(|c| cat.column_index(c).ok_or_else(|| NodeError::UnknownColumn(format!("{}.{c}", q.alias))))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let rows = Self::matching_rows(cat, q, &preds);
        Ok(match columns {
            None => QueryResult::Count(rows.len() as u64),
            Some(idx) => QueryResult::Rows(RowSet {
                columns: idx.iter().map(|&i| cat.columns()[i].clone()).collect::<Vec<ColumnSchema>>(),
                rows: rows.iter().map(|&r| idx.iter().map(|&i| cat.value(r, i)).collect()).collect(),
            }),
        })
    }

    /// Executes plan stage `my_stage`. The last stage emits 1-tuples; every
    /// other stage first calls `my_stage + 1` and extends (or, as a drop-out,
    /// filters) what comes back.
    pub fn svc_crossmatch(&self, plan: &ExecutionPlan, my_stage: u32) -> Result<PartialResultSet, NodeError> {
        let cat = self.cat()?;
        let stage = plan
            .stages
            .get(my_stage as usize)
            .filter(|s| s.archive_name == cat.archive_name())
            .ok_or_else(|| NodeError::PlanStageMismatch { stage: my_stage, archive: cat.archive_name().to_string() })?;
        let q = &stage.node_query;
        Self::check_table(cat, q)?;
        let preds = compile_predicates(&q.predicates, &q.alias, cat)?;
        let carried_idx: Vec<usize> = plan
            .select
            .iter()
            .filter(|c| c.alias == q.alias)
            .map(|c| cat.column_index(&c.column).ok_or_else(|| NodeError::UnknownColumn(c.to_string())))
            .collect::<Result<_, _>>()?;
        let carried_schema = carried_idx.iter().map(|&i| CarriedColumn {
            alias: q.alias.clone(),
            column: cat.columns()[i].name.clone(),
            ty: cat.columns()[i].ty,
        });
        let carried = |row: usize| carried_idx.iter().map(move |&i| cat.value(row, i));
        let member = |row: usize| Member { archive: cat.archive_name().to_string(), object_id: cat.object_id(row) };
        let noise = cat.noise();

        if my_stage as usize + 1 == plan.stages.len() {
            if stage.role == StageRole::Dropout {
                return Err(NodeError::PlanStageMismatch { stage: my_stage, archive: cat.archive_name().to_string() });
            }
            let tuples: Vec<CandidateTuple> = Self::matching_rows(cat, q, &preds)
                .into_iter()
                .map(|r| CandidateTuple {
                    members: vec![member(r)],
                    acc: Accumulators::single(&cat.position(r), noise),
                    carried: carried(r).collect(),
                })
                .collect();
            return Ok(PartialResultSet {
                transfers: vec![tuples.len() as u64],
                tuples,
                schema: carried_schema.collect(),
                stage: my_stage,
            });
        }

        let next = &plan.stages[my_stage as usize + 1];
        let request = Message::CrossMatch { plan: plan.clone(), stage: my_stage + 1 };
        let incoming = match self.transport.call(&next.endpoint, &request, self.call_timeout) {
            Ok(Message::CrossMatchResult(p)) => p,
            Ok(Message::Error(e)) => return Err(NodeError::Remote { kind: e.kind, message: e.message }),
            Ok(other) => {
                return Err(NodeError::ChainTransportError {
                    endpoint: next.endpoint.clone(),
                    reason: format!("unexpected reply kind {}", other.kind()),
                })
            }
            Err(e) => return Err(NodeError::chain(&next.endpoint, e)),
        };
        if incoming.stage != my_stage + 1 {
            return Err(NodeError::PlanStageMismatch { stage: incoming.stage, archive: next.archive_name.clone() });
        }

        let key = (plan.correlation_id, my_stage);
        let incoming = Arc::new(incoming);
        self.staging.lock().expect("staging poisoned").insert(key, Arc::clone(&incoming));
        let _staged = Staged { node: self, key };

        let (area_center, area_radius) = q.area.circle();
        let admissible = |r: usize| angular_distance(&cat.position(r), &area_center) <= area_radius && all_hold(&preds, cat, r);
        let theta = plan.theta;
        let mut out = Vec::new();
        for t in &incoming.tuples {
            let best = t.acc.best_position();
            match stage.role {
                StageRole::Mandatory => {
                    let Ok(best) = best else { continue };
                    let radius = t.acc.candidate_radius(noise, theta);
                    for r in cat.index().range_search(&best, radius, Some(&admissible)) {
                        let acc = t.acc.fold(&cat.position(r), noise);
                        if acc.accepts(theta) {
                            let mut members = t.members.clone();
                            members.push(member(r));
                            let mut values = t.carried.clone();
                            values.extend(carried(r));
                            out.push(CandidateTuple { members, acc, carried: values });
                        }
                    }
                }
                StageRole::Dropout => {
                    let blocked = match best {
                        Ok(best) => cat
                            .index()
                            .range_search(&best, t.acc.candidate_radius(noise, theta), Some(&admissible))
                            .into_iter()
                            .any(|r| t.acc.fold(&cat.position(r), noise).accepts(theta)),
                        Err(_) => false,
                    };
                    if !blocked {
                        out.push(t.clone());
                    }
                }
            }
        }
        let mut schema = incoming.schema.clone();
        schema.extend(carried_schema);
        let mut transfers = incoming.transfers.clone();
        transfers.push(out.len() as u64);
        Ok(PartialResultSet { tuples: out, schema, stage: my_stage, transfers })
    }
}

fn reply<T>(r: Result<T, NodeError>, wrap: impl FnOnce(T) -> Message) -> Message {
    match r {
        Ok(v) => wrap(v),
        Err(e) => Message::error(e.kind(), e.to_string()),
    }
}

impl Service for SkyNode {
    fn handle(&self, request: Message) -> Message {
        match request {
            Message::InformationRequest => reply(self.svc_information(), Message::Information),
            Message::MetadataRequest => reply(self.svc_metadata(), Message::Metadata),
            Message::Query(q) => reply(self.svc_query(&q), Message::QueryResult),
            Message::CrossMatch { plan, stage } => reply(self.svc_crossmatch(&plan, stage), Message::CrossMatchResult),
            other => Message::error("UnsupportedAction", format!("a node does not serve {}", other.action())),
        }
    }
}

/// Announces a node to the portal. The portal calls back Metadata and then
/// Information on `node_endpoint` before acknowledging.
pub fn register_with_portal(
    transport: &dyn Transport,
    portal_endpoint: &str,
    archive_name: &str,
    node_endpoint: &str,
    timeout: Duration,
) -> Result<String, NodeError> {
    let request = Message::Registration(RegistrationRequest {
        archive_name: archive_name.to_string(),
        endpoint: node_endpoint.to_string(),
    });
    match transport.call(portal_endpoint, &request, timeout) {
        Ok(Message::Ack(text)) => Ok(text),
        Ok(Message::Error(e)) if e.kind == "DuplicateArchiveName" => Err(NodeError::DuplicateArchiveName(archive_name.to_string())),
        Ok(Message::Error(e)) => Err(NodeError::Remote { kind: e.kind, message: e.message }),
        Ok(other) => Err(NodeError::PortalUnreachable(format!("unexpected reply kind {}", other.kind()))),
        Err(e) => Err(NodeError::PortalUnreachable(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portal::PlanStage;
    use crate::query::{fragment, parse, to_count_query};
    use crate::skynode::read_catalog_csv;
    use crate::sphere::ARCSEC;
    use crate::wire::InprocTransport;
    use crate::xmatch::ArchiveNoise;

    fn node(csv: &str, name: &str, sigma: f64, t: &InprocTransport) -> Arc<SkyNode> {
        let (c, r) = read_catalog_csv(csv.as_bytes()).unwrap();
        let cat = NodeCatalog::new(name, "T", ArchiveNoise::from_arcsec(sigma).unwrap(), c, r, 8).unwrap();
        let n = Arc::new(SkyNode::new(cat, Arc::new(t.clone())));
        t.register(name, n.clone());
        n
    }

    const HEAD: &str = "object_id:int,ra_deg:float,dec_deg:float,type:string\n";

    fn plan(q: &str, order: &[&str]) -> ExecutionPlan {
        let ast = parse(q).unwrap();
        ExecutionPlan {
            stages: order
                .iter()
                .map(|alias| {
                    let b = ast.binding(alias).unwrap();
                    PlanStage {
                        archive_name: b.archive_name.clone(),
                        endpoint: b.archive_name.clone(),
                        node_query: fragment(&ast, alias).unwrap(),
                        role: if ast.is_dropout(alias) { StageRole::Dropout } else { StageRole::Mandatory },
                        noise: ArchiveNoise::from_arcsec(1.0).unwrap(),
                        count: None,
                    }
                })
                .collect(),
            theta: ast.xmatch.threshold_sigma,
            area: ast.area,
            select: ast.select_items.clone(),
            correlation_id: 7,
        }
    }

    #[test]
    fn uninitialized_node() {
        let n = SkyNode::uninitialized(Arc::new(InprocTransport::default()));
        assert_eq!(n.svc_information(), Err(NodeError::NodeUninitialized));
        assert_eq!(n.svc_metadata(), Err(NodeError::NodeUninitialized));
        match n.handle(Message::InformationRequest) {
            Message::Error(e) => assert_eq!(e.kind, "NodeUninitialized"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn information_echoes_configuration() {
        let t = InprocTransport::default();
        let n = node(HEAD, "A", 0.1, &t);
        let info = n.svc_information().unwrap();
        assert!((info.noise.sigma_rad() - 0.1 * ARCSEC).abs() < 1e-20);
        assert_eq!(info.primary_table, "T");
        assert_eq!(n.svc_metadata().unwrap().tables[0].row_count, 0);
    }

    #[test]
    fn counts_and_rows() {
        let t = InprocTransport::default();
        let data = format!("{HEAD}1,10,10,GALAXY\n2,10,10.001,STAR\n3,10,10.002,GALAXY\n4,50,10,GALAXY\n");
        let n = node(&data, "A", 0.1, &t);
        let ast = parse("SELECT O.type FROM A:T O, B:T P WHERE AREA(10,10,60) AND XMATCH(O,P)<3 AND O.type = GALAXY").unwrap();
        let f = fragment(&ast, "O").unwrap();
        assert_eq!(n.svc_query(&to_count_query(&f)).unwrap(), QueryResult::Count(2));
        let QueryResult::Rows(rows) = n.svc_query(&f).unwrap() else { panic!() };
        assert_eq!(rows.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["object_id", "type", "ra_deg", "dec_deg"]);
        assert_eq!(rows.rows.len(), 2);

        let all = parse("SELECT O.type FROM A:T O, B:T P WHERE AREA(0,0,648000) AND XMATCH(O,P)<3").unwrap();
        let mut whole = to_count_query(&fragment(&all, "O").unwrap());
        whole.area.radius_arcsec = 180.0 * 3600.0;
        assert_eq!(n.svc_query(&whole).unwrap(), QueryResult::Count(4));

        let mut bad = f.clone();
        bad.table = "Nope".into();
        assert_eq!(n.svc_query(&bad), Err(NodeError::UnknownTable("Nope".into())));
    }

    #[test]
    fn tail_stage_emits_one_tuples() {
        let t = InprocTransport::default();
        let data = format!("{HEAD}1,10,10,G\n2,10,10.0001,G\n3,10.0001,10,G\n");
        node(&data, "A", 1.0, &t);
        let n = node(&data, "B", 1.0, &t);
        let p = plan("SELECT O.object_id FROM A:T O, B:T P WHERE AREA(10,10,60) AND XMATCH(O,P)<3", &["O", "P"]);
        let prs = n.svc_crossmatch(&p, 1).unwrap();
        assert_eq!(prs.tuples.len(), 3);
        assert!(prs.tuples.iter().all(|t| t.acc.n == 1 && t.acc.chi().unwrap() == 0.0));
        assert_eq!(prs.transfers, [3]);
        assert!(prs.schema.is_empty());
    }

    #[test]
    fn two_stage_chain_and_hygiene() {
        let t = InprocTransport::default();
        let data = format!("{HEAD}1,10,10,G\n2,10,10.01,G\n3,10.01,10,G\n");
        let a = node(&data, "A", 1.0, &t);
        let b = node(&data, "B", 1.0, &t);
        let p = plan("SELECT O.object_id, P.type FROM A:T O, B:T P WHERE AREA(10,10,600) AND XMATCH(O,P)<3", &["O", "P"]);
        let prs = a.svc_crossmatch(&p, 0).unwrap();
        let mut pairs: Vec<_> = prs.tuples.iter().map(|t| (t.members[0].object_id, t.members[1].object_id)).collect();
        pairs.sort();
        assert_eq!(pairs, [(1, 1), (2, 2), (3, 3)]);
        assert_eq!(prs.schema.iter().map(|c| format!("{}.{}", c.alias, c.column)).collect::<Vec<_>>(), ["P.type", "O.object_id"]);
        assert_eq!(prs.tuples[0].carried.len(), 2);
        assert_eq!(prs.transfers, [3, 3]);
        assert_eq!(a.staged_count(), 0);
        assert_eq!(b.staged_count(), 0);
    }

    #[test]
    fn wrong_stage_and_unreachable_downstream() {
        let t = InprocTransport::default();
        let a = node(HEAD, "A", 1.0, &t);
        let p = plan("SELECT O.object_id FROM A:T O, B:T P WHERE AREA(10,10,60) AND XMATCH(O,P)<3", &["O", "P"]);
        assert!(matches!(a.svc_crossmatch(&p, 1), Err(NodeError::PlanStageMismatch { .. })));
        assert!(matches!(a.svc_crossmatch(&p, 0), Err(NodeError::ChainTransportError { .. })));
        assert_eq!(a.staged_count(), 0);
    }
}
