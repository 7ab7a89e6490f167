use std::sync::Arc;

use super::{Agent, GatewayError};
use crate::model::AgentProfile;
use crate::router::split_description;

#[derive(Clone)]
pub struct RegisteredAgent {
    pub profile: AgentProfile,
    pub handle: Arc<dyn Agent>,
}

impl std::fmt::Debug for RegisteredAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegisteredAgent")
            .field("profile", &self.profile)
            .finish_non_exhaustive()
    }
}

/// Agents in registration order. Cloning is cheap; the gateway hands each
/// request its own snapshot.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    agents: Vec<RegisteredAgent>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, mut profile: AgentProfile, handle: Arc<dyn Agent>) -> Result<(), GatewayError> {
        if self.get(&profile.id).is_some() {
            return Err(GatewayError::DuplicateAgent(profile.id));
        }
        profile.skill_sentences = split_description(&profile.description);
        self.agents.push(RegisteredAgent { profile, handle });
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Result<AgentProfile, GatewayError> {
        let pos = self
            .agents
            .iter()
            .position(|a| a.profile.id == id)
            .ok_or_else(|| GatewayError::UnknownAgent(id.to_string()))?;
        Ok(self.agents.remove(pos).profile)
    }

    pub fn get(&self, id: &str) -> Option<&RegisteredAgent> {
        self.agents.iter().find(|a| a.profile.id == id)
    }

    pub fn agents(&self) -> &[RegisteredAgent] {
        &self.agents
    }

    pub fn profiles(&self) -> Vec<AgentProfile> {
        self.agents.iter().map(|a| a.profile.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}
