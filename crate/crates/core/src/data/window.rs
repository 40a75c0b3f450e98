//! Per-recording z-scoring and sliding-window segmentation.

use super::{ImuWindow, SignalStream, N_CHANNELS};
use crate::error::{Error, Result};
use ndarray::Array2;

/// Result of [`normalize_stream`]: the z-scored stream plus the indices of
/// channels that were constant and therefore mapped to all zeros.
#[derive(Clone, Debug)]
pub struct NormalizeOutcome {
    pub stream: SignalStream,
    pub constant_channels: Vec<usize>,
}

/// Z-scores each channel independently to mean 0 and population standard
/// deviation 1. Constant channels become all zeros and are reported in
/// the outcome so callers can warn.
pub fn normalize_stream(stream: &SignalStream) -> Result<NormalizeOutcome> {
    stream.validate()?;
    if stream.len() < 2 {
        return Err(Error::Config(format!(
            "normalize_stream needs channel length >= 2, got {}",
            stream.len()
        )));
    }
    let mut out = stream.clone();
    let mut constant = Vec::new();
    let n = stream.len() as f64;
    for (i, ch) in out.channels.iter_mut().enumerate() {
        let mean = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 0.0 {
            for v in ch.iter_mut() {
                *v = (*v - mean) / std;
            }
        } else {
            constant.push(i);
            for v in ch.iter_mut() {
                *v = 0.0;
            }
        }
    }
    Ok(NormalizeOutcome { stream: out, constant_channels: constant })
}

/// Window stride for a given length and overlap. Errors unless
/// `window_len * (1 - overlap_ratio)` is a positive integer.
pub fn window_stride(window_len: usize, overlap_ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap_ratio) {
        return Err(Error::Config(format!(
            "overlap_ratio must be in [0, 1), got {overlap_ratio}"
        )));
    }
    let stride_f = window_len as f64 * (1.0 - overlap_ratio);
    let stride = stride_f.round();
    if (stride_f - stride).abs() > 1e-9 || stride < 1.0 {
        return Err(Error::Config(format!(
            "window_len {window_len} with overlap {overlap_ratio} gives non-integer stride {stride_f}"
        )));
    }
    Ok(stride as usize)
}

/// Cuts a stream into windows starting at 0, stride, 2*stride, ... while
/// the full window fits. A stream shorter than `window_len` yields an
/// empty list.
pub fn segment_windows(
    stream: &SignalStream,
    window_len: usize,
    overlap_ratio: f64,
) -> Result<Vec<ImuWindow>> {
    stream.validate()?;
    if window_len == 0 {
        return Err(Error::Config("window_len must be positive".into()));
    }
    let stride = window_stride(window_len, overlap_ratio)?;
    let len = stream.len();
    let mut windows = Vec::new();
    let mut start = 0;
    while start + window_len <= len {
        let mut values = Array2::<f64>::zeros((N_CHANNELS, window_len));
        for (c, ch) in stream.channels.iter().enumerate() {
            values
                .row_mut(c)
                .iter_mut()
                .zip(&ch[start..start + window_len])
                .for_each(|(dst, src)| *dst = *src);
        }
        windows.push(ImuWindow::new(
            values,
            stream.subject_id.clone(),
            stream.gender,
            stream.activity,
        )?);
        start += stride;
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Activity, Gender};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn stream_of_len(len: usize) -> SignalStream {
        let channels = std::array::from_fn(|c| (0..len).map(|t| (t * (c + 1)) as f64).collect());
        SignalStream {
            subject_id: "s0".into(),
            gender: Gender::Male,
            activity: Activity::new(0).unwrap(),
            sample_rate_hz: 50.0,
            channels,
        }
    }

    #[test]
    fn normalize_three_point_channel() {
        let mut s = stream_of_len(3);
        s.channels[0] = vec![2.0, 4.0, 6.0];
        let out = normalize_stream(&s).unwrap();
        let expected = 2.0 / (8.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(out.stream.channels[0][0], -expected, epsilon = 1e-4);
        assert_abs_diff_eq!(out.stream.channels[0][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.stream.channels[0][2], expected, epsilon = 1e-4);
        // Matches the rounded reference values.
        assert_abs_diff_eq!(out.stream.channels[0][2], 1.2247, epsilon = 1e-4);
    }

    #[test]
    fn normalize_is_idempotent() {
        let s = stream_of_len(64);
        let once = normalize_stream(&s).unwrap().stream;
        let twice = normalize_stream(&once).unwrap().stream;
        for c in 0..N_CHANNELS {
            for (a, b) in once.channels[c].iter().zip(&twice.channels[c]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn normalize_constant_channel_maps_to_zeros_with_warning() {
        let mut s = stream_of_len(10);
        s.channels[3] = vec![5.0; 10];
        let out = normalize_stream(&s).unwrap();
        assert_eq!(out.constant_channels, vec![3]);
        assert!(out.stream.channels[3].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalize_statistics_contract() {
        let s = stream_of_len(500);
        let out = normalize_stream(&s).unwrap().stream;
        for ch in &out.channels {
            let n = ch.len() as f64;
            let mean = ch.iter().sum::<f64>() / n;
            let std = (ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-6);
            assert!((std - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn segment_counts_match_reference_cases() {
        assert_eq!(segment_windows(&stream_of_len(1000), 100, 0.75).unwrap().len(), 37);
        assert_eq!(segment_windows(&stream_of_len(100), 100, 0.75).unwrap().len(), 1);
        assert_eq!(segment_windows(&stream_of_len(99), 100, 0.75).unwrap().len(), 0);
    }

    #[test]
    fn segment_rejects_non_integer_stride() {
        let err = segment_windows(&stream_of_len(100), 10, 0.25).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn segment_windows_inherit_labels_and_content() {
        let s = stream_of_len(130);
        let ws = segment_windows(&s, 100, 0.75).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1].subject_id, "s0");
        // second window starts at stride 25
        assert_eq!(ws[1].values[[2, 0]], s.channels[2][25]);
    }

    fn brute_force_count(len: usize, window_len: usize, stride: usize) -> usize {
        (0..=len)
            .filter(|s| s % stride == 0 && s + window_len <= len)
            .count()
    }

    proptest! {
        #[test]
        fn segment_count_matches_brute_force(
            len in 0usize..2000,
            window_len in 1usize..200,
            stride in 1usize..50,
        ) {
            // Build an overlap that produces exactly this stride.
            prop_assume!(stride <= window_len);
            let overlap = 1.0 - stride as f64 / window_len as f64;
            prop_assume!((0.0..1.0).contains(&overlap));
            let s = stream_of_len(len);
            if len < 2 {
                return Ok(());
            }
            let ws = segment_windows(&s, window_len, overlap).unwrap();
            prop_assert_eq!(ws.len(), brute_force_count(len, window_len, stride));
        }
    }
}
