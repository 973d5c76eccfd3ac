use std::ops::Range;

use rand::seq::index::sample;
use rand::Rng;

use super::generate::{DatasetTag, SyntheticSample, SyntheticVideo};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::seed;

/// Splits `[0, len)` into `k` contiguous ranges whose sizes differ by at
/// most one.
pub fn segments(len: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 || len < k {
        return Err(Error::Contract(format!(
            "cannot split {len} frames into {k} non-empty segments"
        )));
    }
    Ok((0..k).map(|i| i * len / k..(i + 1) * len / k).collect())
}

/// One uniformly drawn index per segment, in segment order.
pub fn sparse_indices<R: Rng + ?Sized>(segs: &[Range<usize>], rng: &mut R) -> Vec<usize> {
    segs.iter().map(|s| rng.random_range(s.clone())).collect()
}

/// Draws one frame from each of the video's segments.
pub fn sparse_sample(video: &SyntheticVideo, seed: u64) -> Vec<SyntheticSample> {
    let mut rng = seed::rng(seed, 0);
    sparse_indices(&video.segments, &mut rng)
        .into_iter()
        .map(|i| video.frames[i].clone())
        .collect()
}

/// A mixed mini-batch. Emotion frames come first, then `k` frames for each
/// video, grouped by video.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[n_emotion + n_videos * k, 1, S, S]`.
    pub images: Tensor,
    pub n_emotion: usize,
    pub n_videos: usize,
    pub k: usize,
    /// `[n_emotion, 2]` as `(arousal, valence)`.
    pub emotion_labels: Option<Tensor>,
    /// `[n_videos, 5]`.
    pub traits: Option<Tensor>,
}

impl Batch {
    /// Assembles a batch from explicit frames and per-video frame indices.
    pub fn from_parts(
        emotion: &[&SyntheticSample],
        videos: &[(&SyntheticVideo, Vec<usize>)],
    ) -> Result<Self> {
        let k = videos.first().map_or(0, |(_, idx)| idx.len());
        if videos.iter().any(|(_, idx)| idx.len() != k || k == 0) {
            return Err(Error::Contract("every video needs the same non-zero number of frames".into()));
        }
        let mut frames: Vec<&Tensor> = emotion.iter().map(|s| &s.image).collect();
        for (v, idx) in videos {
            for &i in idx {
                let f = v
                    .frames
                    .get(i)
                    .ok_or_else(|| Error::Contract(format!("frame {i} out of range")))?;
                frames.push(&f.image);
            }
        }
        if frames.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let images = Tensor::stack(&frames)?;
        let emotion_labels = (!emotion.is_empty()).then(|| {
            let data = emotion.iter().flat_map(|s| [s.arousal, s.valence]).collect();
            Tensor::new(vec![emotion.len(), 2], data).expect("two labels per frame")
        });
        let traits = (!videos.is_empty()).then(|| {
            let data = videos.iter().flat_map(|(v, _)| v.traits).collect();
            Tensor::new(vec![videos.len(), 5], data).expect("five traits per video")
        });
        Ok(Batch {
            images,
            n_emotion: emotion.len(),
            n_videos: videos.len(),
            k,
            emotion_labels,
            traits,
        })
    }

    pub fn len(&self) -> usize {
        self.n_emotion + self.n_videos * self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dataset tag of every frame, in batch order.
    pub fn tags(&self) -> Vec<DatasetTag> {
        let mut tags = vec![DatasetTag::Emotion; self.n_emotion];
        tags.resize(self.len(), DatasetTag::Personality);
        tags
    }
}

/// Draws `n_emotion` distinct frames and `n_videos` distinct videos, then
/// sparsely samples `k` frames from each video.
pub fn make_batch(
    emotion_pool: &[SyntheticSample],
    video_pool: &[SyntheticVideo],
    n_emotion: usize,
    n_videos: usize,
    k: usize,
    seed: u64,
) -> Result<Batch> {
    if n_emotion > emotion_pool.len() {
        return Err(Error::config(
            "n_emotion",
            format!("batch needs {n_emotion} frames, pool has {}", emotion_pool.len()),
        ));
    }
    if n_videos > video_pool.len() {
        return Err(Error::config(
            "n_videos",
            format!("batch needs {n_videos} videos, pool has {}", video_pool.len()),
        ));
    }
    let mut rng = seed::rng(seed, 0);
    let emotion: Vec<&SyntheticSample> = sample(&mut rng, emotion_pool.len(), n_emotion)
        .into_iter()
        .map(|i| &emotion_pool[i])
        .collect();
    let mut videos = Vec::with_capacity(n_videos);
    for i in sample(&mut rng, video_pool.len(), n_videos) {
        let v = &video_pool[i];
        let segs = segments(v.frames.len(), k)
            .map_err(|e| Error::config("k", e.to_string()))?;
        videos.push((v, sparse_indices(&segs, &mut rng)));
    }
    Batch::from_parts(&emotion, &videos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_emotion_set, gen_personality_set, PlantedRelationship, RenderParams, ShiftParams, VideoParams};

    fn small_render() -> RenderParams {
        RenderParams {
            image_size: 8,
            ..RenderParams::default()
        }
    }

    fn videos(n: usize, len: usize, k: usize) -> Vec<SyntheticVideo> {
        let vp = VideoParams {
            frames_per_video: len,
            k,
            frame_jitter: 0.1,
            latent_range: 0.8,
        };
        gen_personality_set(n, 3, &vp, &PlantedRelationship::default(), &ShiftParams::NONE, &small_render()).unwrap()
    }

    #[test]
    fn segments_partition_the_range() {
        for len in 1..40 {
            for k in 1..=len {
                let segs = segments(len, k).unwrap();
                assert_eq!(segs.len(), k);
                assert_eq!(segs[0].start, 0);
                assert_eq!(segs[k - 1].end, len);
                for w in segs.windows(2) {
                    assert_eq!(w[0].end, w[1].start);
                }
                let sizes: Vec<usize> = segs.iter().map(|s| s.len()).collect();
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                assert!(hi - lo <= 1 && *lo >= 1);
            }
        }
        assert!(segments(3, 4).is_err());
    }

    #[test]
    fn singleton_segments_return_every_frame() {
        let v = &videos(1, 6, 6)[0];
        let picked = sparse_sample(v, 9);
        assert_eq!(picked, v.frames);
    }

    #[test]
    fn picks_lie_in_their_segment() {
        let segs = segments(20, 10).unwrap();
        let mut rng = seed::rng(5, 0);
        for _ in 0..100 {
            let idx = sparse_indices(&segs, &mut rng);
            for (i, s) in idx.iter().zip(&segs) {
                assert!(s.contains(i));
            }
        }
    }

    #[test]
    fn picks_are_uniform_within_segments() {
        let segs = segments(20, 10).unwrap();
        let mut rng = seed::rng(6, 0);
        let mut counts = [0usize; 20];
        let draws = 10_000;
        for _ in 0..draws {
            for i in sparse_indices(&segs, &mut rng) {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn default_batch_has_two_hundred_frames() {
        let emo = gen_emotion_set(120, 1, 0.8, &ShiftParams::emotion_default(), &small_render());
        let vids = videos(12, 20, 10);
        let b = make_batch(&emo, &vids, 100, 10, 10, 4).unwrap();
        assert_eq!(b.len(), 200);
        assert_eq!(b.images.shape(), &[200, 1, 8, 8]);
        assert_eq!(b.traits.as_ref().unwrap().shape(), &[10, 5]);

        let only = make_batch(&emo, &vids, 100, 0, 10, 4).unwrap();
        assert_eq!(only.len(), 100);
        assert!(only.traits.is_none());

        assert_eq!(make_batch(&emo, &vids, 100, 10, 10, 4).unwrap(), b);
        assert!(matches!(make_batch(&emo, &vids, 121, 1, 10, 4), Err(Error::Config { .. })));
        assert!(matches!(make_batch(&emo, &vids, 1, 13, 10, 4), Err(Error::Config { .. })));
    }
}
