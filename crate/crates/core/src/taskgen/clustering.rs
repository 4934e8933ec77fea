//! Test-only clustering tasks keyed by full IPC3 set or by inventor.

use std::collections::BTreeMap;

use crate::domains::Split;

use super::pipeline::BuildContext;
use super::{ClusterBounds, ClusterMember, Records, TaskDataset, TaskId};

/// Groups test-split families and drops clusters outside `bounds`.
/// Families with several inventors appear once per inventor cluster.
pub fn build_clustering(ctx: &BuildContext<'_>, task: TaskId, bounds: ClusterBounds) -> TaskDataset {
    let mut clusters: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in ctx.splits.members(Split::Test) {
        match task {
            TaskId::ClustersExtFullIpc => clusters.entry(ctx.domains.signature(i)).or_default().push(i),
            TaskId::ClustersInventor => {
                let mut inventors: Vec<&String> = ctx.corpus.get(i).inventors.iter().collect();
                inventors.sort();
                inventors.dedup();
                for inv in inventors {
                    clusters.entry(inv.clone()).or_default().push(i);
                }
            }
            _ => panic!("{task} is not a clustering task"),
        }
    }
    let mut records = Vec::new();
    let mut members = Vec::new();
    let mut strata = Vec::new();
    for (key, fams) in clusters {
        if fams.len() < bounds.min || fams.len() > bounds.max {
            continue;
        }
        for i in fams {
            records.push(ClusterMember {
                text: ctx.texts[i].clone(),
                cluster_id: key.clone(),
            });
            members.push(vec![i]);
            strata.push(key.clone());
        }
    }
    TaskDataset {
        task,
        split: Split::Test,
        records: Records::Clustering(records),
        members,
        strata,
    }
}
