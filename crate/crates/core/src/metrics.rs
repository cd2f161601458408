//! Engagement metrics over a filtered batch.
//!
//! Definitions where the report template only names a figure:
//! - engagement rate: `100 * total_forwards / total_views`, the share rate;
//! - views/forwards ratio: mean of `views / forwards` over posts with at
//!   least one forward;
//! - virality score: percentage of posts with `views > 0` whose
//!   `forwards / views` reaches the virality threshold (default 0.01).
//!
//! Values keep full precision; rounding happens when a report is rendered.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::filter::FilteredBatch;
use crate::message::{RawMessage, TimeWindow};

pub const DEFAULT_VIRALITY_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementMetrics {
    pub total_messages: u64,
    pub total_views: u64,
    pub total_forwards: u64,
    pub avg_views: f64,
    pub avg_forwards: f64,
    /// Percent.
    pub engagement_rate: f64,
    pub views_to_forwards_ratio_avg: f64,
    /// Percent.
    pub virality_score: f64,
    pub unique_channels: u64,
    pub posts_per_day: f64,
    pub max_daily_posts: u64,
    pub channel_activity_ratio: f64,
}

pub fn compute_metrics(batch: &FilteredBatch, virality_threshold: f64) -> EngagementMetrics {
    compute_for(batch.messages(), &batch.window, virality_threshold)
}

/// Same as [`compute_metrics`] over a bare message slice.
pub fn compute_for(messages: &[RawMessage], window: &TimeWindow, virality_threshold: f64) -> EngagementMetrics {
    if messages.is_empty() {
        return EngagementMetrics::default();
    }
    let n = messages.len() as u64;
    let mut total_views = 0u64;
    let mut total_forwards = 0u64;
    let mut ratio_sum = 0f64;
    let mut ratio_count = 0u64;
    let mut viral = 0u64;
    let mut channels = BTreeSet::new();
    for m in messages {
        total_views += m.views;
        total_forwards += m.forwards;
        if m.forwards > 0 {
            ratio_sum += m.views as f64 / m.forwards as f64;
            ratio_count += 1;
        }
        if m.views > 0 && m.forwards as f64 / m.views as f64 >= virality_threshold {
            viral += 1;
        }
        channels.insert(m.channel_key.as_str());
    }
    let unique_channels = channels.len() as u64;
    let window_days = (window.length().num_seconds() as f64 / 86_400.0).max(1.0);
    let max_daily_posts = daily_counts(messages).values().copied().max().unwrap_or(0);

    EngagementMetrics {
        total_messages: n,
        total_views,
        total_forwards,
        avg_views: total_views as f64 / n as f64,
        avg_forwards: total_forwards as f64 / n as f64,
        engagement_rate: if total_views == 0 {
            0.0
        } else {
            100.0 * total_forwards as f64 / total_views as f64
        },
        views_to_forwards_ratio_avg: if ratio_count == 0 {
            0.0
        } else {
            ratio_sum / ratio_count as f64
        },
        virality_score: 100.0 * viral as f64 / n as f64,
        unique_channels,
        posts_per_day: n as f64 / window_days,
        max_daily_posts,
        channel_activity_ratio: n as f64 / unique_channels as f64,
    }
}

fn daily_counts(messages: &[RawMessage]) -> BTreeMap<NaiveDate, u64> {
    let mut days = BTreeMap::new();
    for m in messages {
        *days.entry(m.posted_at.date_naive()).or_insert(0) += 1;
    }
    days
}

/// Message counts per UTC calendar date, ascending, without empty days.
pub fn daily_histogram(batch: &FilteredBatch) -> Vec<(NaiveDate, u64)> {
    daily_counts(batch.messages()).into_iter().collect()
}
