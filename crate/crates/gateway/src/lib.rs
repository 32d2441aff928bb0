//! HTTP gateway and command-line front end for the shroud pipeline.
//!
//! The gateway runs every step up to the anonymized payload, then waits for
//! an explicit approval before anything is sent to an answer provider.

pub mod app;
pub mod cli;
pub mod config;
pub mod session;

use std::sync::Arc;

use shroud_core::corpus::Corpus;
use shroud_core::detection::{EntityDetector, NerServiceDetector, RuleDetector};
use shroud_core::mapping::MappingError;
use shroud_core::pipeline::Pipeline;
use shroud_core::provider::{CloudEndpoint, LocalEndpoint, MockProvider, ProviderTag};

use crate::app::Providers;
use crate::config::GatewayConfig;

/// Wires the detector, local analyzer and mapping settings from `config`.
pub fn build_pipeline(config: &GatewayConfig, corpus: Corpus) -> Result<Pipeline, MappingError> {
    let detector: Arc<dyn EntityDetector> = match &config.ner_url {
        Some(url) => Arc::new(NerServiceDetector::new(url.clone())),
        None => Arc::new(RuleDetector::new()),
    };
    let mut pipeline = Pipeline::new(Arc::new(corpus), detector).with_top_k(config.top_k);
    if let Some(local) = &config.local {
        pipeline = pipeline.with_analyzer(Arc::new(LocalEndpoint::new(local.clone())));
    }
    pipeline.with_mapping(config.mapping())
}

/// The mock is always available; local and cloud when configured. The
/// default is the cloud endpoint if there is one, else the mock.
pub fn build_providers(config: &GatewayConfig) -> Providers {
    let default = if config.cloud.is_some() { ProviderTag::Cloud } else { ProviderTag::Mock };
    let mut providers = Providers::new(default).with(ProviderTag::Mock, Arc::new(MockProvider::default()));
    if let Some(local) = &config.local {
        providers = providers.with(ProviderTag::Local, Arc::new(LocalEndpoint::new(local.clone())));
    }
    if let Some(cloud) = &config.cloud {
        providers = providers.with(ProviderTag::Cloud, Arc::new(CloudEndpoint::new(cloud.clone())));
    }
    providers
}
