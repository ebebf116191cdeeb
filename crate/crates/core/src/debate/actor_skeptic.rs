//! Actor-skeptic: the actor owns the verdict, the skeptic probes it.

use super::session::DebateRuntime;
use super::{AgentRole, DebateConfig, DebateError, DebateSession, DebateStrategy, ResultFlag, SessionResult};
use crate::dataset::ImageTextPair;
use crate::evidence::EvidenceBundle;
use crate::prompt::{NO_FURTHER_QUESTIONS, TemplateId, Verdict, render};

/// Alternates actor and skeptic for at most `k` exchanges. The session ends
/// early when the skeptic has no further questions. Only the actor's last
/// answer decides the verdict.
pub async fn run_actor_skeptic(
    pair: &ImageTextPair,
    evidence: Option<&EvidenceBundle>,
    config: &DebateConfig,
    rt: &DebateRuntime,
) -> Result<SessionResult, DebateError> {
    if config.strategy != DebateStrategy::ActorSkeptic {
        return Err(DebateError::WrongStrategy {
            strategy: config.strategy,
            runner: "run_actor_skeptic",
        });
    }
    let mut session = DebateSession::new(pair, evidence, config, rt)?;
    let actor = session.indices(AgentRole::Actor)[0];
    let skeptic = session.indices(AgentRole::Skeptic)[0];

    let initial = session.initial_prompt();
    session.ask(actor, 0, initial, true).await?;
    session.record_round(0);

    for exchange in 1..=config.max_rounds {
        let analysis = session.agents()[actor].last_response.clone().unwrap_or_default();
        let review =
            render(TemplateId::SkepticReview, &[pair.caption.as_str(), analysis.as_str()]).expect("skeptic arity");
        session.ask(skeptic, exchange, review, true).await?;
        let questions = session.agents()[skeptic].last_response.clone().unwrap_or_default();
        if questions.to_uppercase().contains(NO_FURTHER_QUESTIONS) {
            session.set_early_stop();
            break;
        }
        let revision = render(TemplateId::ActorRevision, &[questions.as_str()]).expect("actor arity");
        session.ask(actor, exchange, revision, true).await?;
        session.record_round(exchange);
    }
    session.terminate();

    if session.agents()[actor].current_verdict == Verdict::Unparseable {
        session.flag(ResultFlag::ActorUnparseable);
    }
    Ok(session.finish())
}
