use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use super::{result_key_column, ExecutionPlan, PlanStage, PortalError, RegistrationRequest, StageRole};
use crate::query::{fragment, parse, to_count_query, QueryAst};
use crate::skynode::{PartialResultSet, QueryResult, SchemaDescription};
use crate::value::ResultTable;
use crate::wire::{new_correlation_id, Message, Service, Transport, TransportError};
use crate::xmatch::ArchiveNoise;

#[derive(Debug, Clone, Copy)]
pub struct PortalConfig {
    /// Timeout for registration callbacks and count-star queries.
    pub call_timeout: Duration,
    /// Timeout for the whole cross-match chain.
    pub chain_timeout: Duration,
}

impl Default for PortalConfig {
    fn default() -> Self {
        PortalConfig { call_timeout: Duration::from_secs(30), chain_timeout: Duration::from_secs(300) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub archive_name: String,
    pub endpoint: String,
    pub schema: SchemaDescription,
    pub noise: ArchiveNoise,
    pub primary_table: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, archive: &str) -> Option<&RegistryEntry> {
        self.entries.get(archive)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }
}

pub struct Portal {
    registry: RwLock<Registry>,
    transport: Arc<dyn Transport>,
    config: PortalConfig,
}

fn remote(reply: Result<Message, TransportError>) -> Result<Message, String> {
    match reply {
        Ok(Message::Error(e)) => Err(e.to_string()),
        Ok(m) => Ok(m),
        Err(e) => Err(e.to_string()),
    }
}

impl Portal {
    pub fn new(transport: Arc<dyn Transport>, config: PortalConfig) -> Self {
        Portal { registry: RwLock::default(), transport, config }
    }

    pub fn registry(&self) -> Registry {
        self.registry.read().expect("registry poisoned").clone()
    }

    /// Registers a node after calling back its Metadata and then its
    /// Information service.
    pub fn svc_registration(&self, req: &RegistrationRequest) -> Result<(), PortalError> {
        if self.registry.read().expect("registry poisoned").get(&req.archive_name).is_some() {
            return Err(PortalError::DuplicateArchiveName(req.archive_name.clone()));
        }
        let failed = |reason: String| PortalError::CallbackFailed { archive: req.archive_name.clone(), reason };
        let timeout = self.config.call_timeout;
        let schema = match remote(self.transport.call(&req.endpoint, &Message::MetadataRequest, timeout)).map_err(failed)? {
            Message::Metadata(s) => s,
            other => return Err(failed(format!("Metadata answered with kind {}", other.kind()))),
        };
        let info = match remote(self.transport.call(&req.endpoint, &Message::InformationRequest, timeout)).map_err(failed)? {
            Message::Information(i) => i,
            other => return Err(failed(format!("Information answered with kind {}", other.kind()))),
        };
        if info.archive_name != req.archive_name || schema.archive_name != req.archive_name {
            return Err(failed(format!("node reports archive name {}", info.archive_name)));
        }
        let mut reg = self.registry.write().expect("registry poisoned");
        if reg.entries.contains_key(&req.archive_name) {
            return Err(PortalError::DuplicateArchiveName(req.archive_name.clone()));
        }
        reg.entries.insert(
            req.archive_name.clone(),
            RegistryEntry {
                archive_name: req.archive_name.clone(),
                endpoint: req.endpoint.clone(),
                schema,
                noise: info.noise,
                primary_table: info.primary_table,
            },
        );
        Ok(())
    }

    /// Count-star planning: counts for mandatory archives are fetched in
    /// parallel and ordered decreasing; drop-outs go first in the list.
    pub fn plan(&self, ast: &QueryAst) -> Result<ExecutionPlan, PortalError> {
        self.plan_with_order(ast, None)
    }

    /// As [`Portal::plan`], but with the mandatory aliases forced into the
    /// given list order (head first) instead of the count-star order.
    pub fn plan_with_order(&self, ast: &QueryAst, forced: Option<&[&str]>) -> Result<ExecutionPlan, PortalError> {
        let reg = self.registry();
        let entry_for = |alias: &str| {
            let b = ast.binding(alias).expect("xmatch aliases are bound");
            reg.get(&b.archive_name).ok_or_else(|| PortalError::UnregisteredArchive(b.archive_name.clone()))
        };
        for b in &ast.archives {
            entry_for(&b.alias)?;
        }
        let mandatory: Vec<&str> = ast.mandatory_aliases().collect();
        let counts = self.count_star(ast, &mandatory, &reg)?;

        let order: Vec<&str> = match forced {
            Some(f) => {
                let mut a: Vec<&str> = f.to_vec();
                let mut b = mandatory.clone();
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    return Err(PortalError::InvalidOrder);
                }
                f.to_vec()
            }
            None => {
                let name = |i: usize| ast.binding(mandatory[i]).expect("bound").archive_name.as_str();
                let mut idx: Vec<usize> = (0..mandatory.len()).collect();
                idx.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then_with(|| name(a).cmp(name(b))));
                idx.into_iter().map(|i| mandatory[i]).collect()
            }
        };

        let stage = |alias: &str, role: StageRole| -> Result<PlanStage, PortalError> {
            let entry = entry_for(alias)?;
            let count = (role == StageRole::Mandatory)
                .then(|| mandatory.iter().position(|m| *m == alias).map(|i| counts[i]))
                .flatten();
            Ok(PlanStage {
                archive_name: entry.archive_name.clone(),
                endpoint: entry.endpoint.clone(),
                node_query: fragment(ast, alias).map_err(|e| PortalError::Parse(e.into()))?,
                role,
                noise: entry.noise,
                count,
            })
        };
        let mut stages = Vec::new();
        for alias in ast.dropout_aliases() {
            stages.push(stage(alias, StageRole::Dropout)?);
        }
        for alias in order {
            stages.push(stage(alias, StageRole::Mandatory)?);
        }
        Ok(ExecutionPlan {
            stages,
            theta: ast.xmatch.threshold_sigma,
            area: ast.area,
            select: ast.select_items.clone(),
            correlation_id: new_correlation_id(),
        })
    }

    fn count_star(&self, ast: &QueryAst, aliases: &[&str], reg: &Registry) -> Result<Vec<u64>, PortalError> {
        let jobs: Vec<(String, String, Message)> = aliases
            .iter()
            .map(|alias| {
                let b = ast.binding(alias).expect("bound");
                let q = to_count_query(&fragment(ast, alias).map_err(|e| PortalError::Parse(e.into()))?);
                let endpoint = reg.get(&b.archive_name).expect("checked registered").endpoint.clone();
                Ok((b.archive_name.clone(), endpoint, Message::Query(q)))
            })
            .collect::<Result<_, PortalError>>()?;
        let timeout = self.config.call_timeout;
        let replies: Vec<(String, Result<Message, String>)> = thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(archive, endpoint, msg)| {
                    let transport = &self.transport;
                    (archive.clone(), s.spawn(move || remote(transport.call(endpoint, msg, timeout))))
                })
                .collect();
            handles
                .into_iter()
                .map(|(a, h)| (a, h.join().unwrap_or_else(|_| Err("count-star worker panicked".into()))))
                .collect()
        });
        replies
            .into_iter()
            .map(|(archive, r)| match r {
                Ok(Message::QueryResult(QueryResult::Count(n))) => Ok(n),
                Ok(other) => Err(PortalError::PerformanceQueryFailed { archive, reason: format!("reply kind {}", other.kind()) }),
                Err(reason) => Err(PortalError::PerformanceQueryFailed { archive, reason }),
            })
            .collect()
    }

    /// Sends the plan to the head of the list and waits for the final set.
    pub fn execute(&self, plan: &ExecutionPlan) -> Result<PartialResultSet, PortalError> {
        let head = plan.stages.first().ok_or(PortalError::InvalidOrder)?;
        let request = Message::CrossMatch { plan: plan.clone(), stage: 0 };
        match self.transport.call(&head.endpoint, &request, self.config.chain_timeout) {
            Ok(Message::CrossMatchResult(p)) => Ok(p),
            Ok(Message::Error(e)) => Err(PortalError::Remote { kind: e.kind, message: e.message }),
            Ok(other) => Err(PortalError::ChainTransportError(format!("unexpected reply kind {}", other.kind()))),
            Err(e) => Err(PortalError::ChainTransportError(e.to_string())),
        }
    }

    /// Projects the final tuples onto the SELECT list and sorts the rows.
    pub fn project(ast: &QueryAst, prs: &PartialResultSet) -> Result<ResultTable, PortalError> {
        let slots: Vec<usize> = ast
            .select_items
            .iter()
            .map(|c| {
                prs.schema
                    .iter()
                    .position(|s| s.alias == c.alias && s.column == c.column)
                    .ok_or_else(|| PortalError::ChainTransportError(format!("column {c} missing from partial results")))
            })
            .collect::<Result<_, _>>()?;
        let mut table = ResultTable::new(ast.select_items.iter().map(|c| c.to_string()).collect());
        for t in &prs.tuples {
            let row = slots
                .iter()
                .map(|&i| t.carried.get(i).cloned())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| PortalError::ChainTransportError("tuple shorter than its schema".into()))?;
            table.rows.push(row);
        }
        table.sort_rows(result_key_column(ast));
        Ok(table)
    }

    /// Parse, plan, execute and project one query.
    pub fn run(&self, ast: &QueryAst, forced: Option<&[&str]>) -> Result<(ResultTable, ExecutionPlan, PartialResultSet), PortalError> {
        let plan = self.plan_with_order(ast, forced)?;
        let prs = self.execute(&plan)?;
        let table = Self::project(ast, &prs)?;
        Ok((table, plan, prs))
    }

    pub fn svc_skyquery(&self, text: &str) -> Result<ResultTable, PortalError> {
        let ast = parse(text)?;
        Ok(self.run(&ast, None)?.0)
    }
}

impl Service for Portal {
    fn handle(&self, request: Message) -> Message {
        let err = |e: PortalError| Message::error(e.kind(), e.to_string());
        match request {
            Message::Registration(req) => match self.svc_registration(&req) {
                Ok(()) => Message::Ack(format!("registered {}", req.archive_name)),
                Err(e) => err(e),
            },
            Message::SkyQuery(text) => match self.svc_skyquery(&text) {
                Ok(t) => Message::SkyQueryResult(t),
                Err(e) => err(e),
            },
            other => Message::error("UnsupportedAction", format!("the portal does not serve {}", other.action())),
        }
    }
}
