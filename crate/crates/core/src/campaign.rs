//! Deterministic sampling campaigns and summary statistics (in progress).
