use serde::{Deserialize, Serialize};

use super::harness::RunConfig;
use crate::debate::{AgentKind, DEFAULT_MODEL, DebateConfig, DebateStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub retrieval: bool,
    pub debate: bool,
    pub config: RunConfig,
}

impl AblationRow {
    pub fn model_id(&self) -> &str {
        self.config
            .debate
            .debaters()
            .next()
            .map(|a| a.model_id.as_str())
            .unwrap_or(DEFAULT_MODEL)
    }
}

/// {retrieval on/off} × {debate on/off}. Debate off is one agent with zero
/// rounds. Each row writes to its own subdirectory of the base output dir.
pub fn ablation_grid(base: &RunConfig) -> Vec<AblationRow> {
    let model = base
        .debate
        .debaters()
        .find(|a| a.kind == AgentKind::Model)
        .map(|a| a.model_id.clone())
        .unwrap_or_else(|| DEFAULT_MODEL.to_string());
    let debate_on = if base.debate.num_agents() >= 2 && base.debate.max_rounds >= 1 {
        base.debate.clone()
    } else {
        DebateConfig::new(DebateStrategy::AsyncHumanFraming, 2, &model)
    };
    let axes = [(false, true), (true, true), (true, false), (false, false)];
    axes.into_iter()
        .map(|(retrieval, debate)| {
            let d = if debate {
                debate_on.clone()
            } else {
                DebateConfig::single_agent(&model)
            }
            .with_evidence(retrieval);
            let mut config = base.clone();
            config.debate = d;
            config.retrieval_enabled = retrieval;
            config.output_dir = base.output_dir.join(format!(
                "retrieval-{}_debate-{}",
                if retrieval { "on" } else { "off" },
                if debate { "on" } else { "off" }
            ));
            AblationRow {
                retrieval,
                debate,
                config,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rows_with_single_agent_baseline() {
        let base = RunConfig::new(
            DebateConfig::new(DebateStrategy::AsyncHumanFraming, 2, "gpt-4o"),
            "/tmp/x",
        );
        let grid = ablation_grid(&base);
        assert_eq!(grid.len(), 4);
        for row in &grid {
            row.config.validate().unwrap();
            assert_eq!(row.config.retrieval_enabled, row.retrieval);
            if !row.debate {
                assert_eq!(row.config.debate.num_agents(), 1);
                assert_eq!(row.config.debate.max_rounds, 0);
            } else {
                assert_eq!(row.config.debate.num_agents(), 2);
            }
        }
        let dirs: std::collections::HashSet<_> = grid.iter().map(|r| &r.config.output_dir).collect();
        assert_eq!(dirs.len(), 4);
    }
}
