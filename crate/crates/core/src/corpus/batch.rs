use super::{Example, Task, Vocabulary, PAD_ID};

/// One segment (text, premise or hypothesis) across the rows of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBatch {
    /// Token ids padded with `PAD_ID` to the longest row.
    pub ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
    /// `mask[r][i] == 1` exactly for `i < lengths[r]`.
    pub mask: Vec<Vec<u8>>,
    /// Human annotation over real tokens, `None` when absent.
    pub annotations: Vec<Option<Vec<u8>>>,
    /// Heuristic map over real tokens, `None` when not supplied.
    pub heuristics: Vec<Option<Vec<f64>>>,
}

impl SegmentBatch {
    pub fn max_len(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }

    pub fn real_ids(&self, row: usize) -> &[u32] {
        &self.ids[row][..self.lengths[row]]
    }

    /// Appends `extra` padding positions to every row.
    pub fn pad_by(&mut self, extra: usize) {
        for (ids, mask) in self.ids.iter_mut().zip(&mut self.mask) {
            ids.extend(std::iter::repeat_n(PAD_ID, extra));
            mask.extend(std::iter::repeat_n(0, extra));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub example_ids: Vec<String>,
    pub task: Task,
    pub segments: Vec<SegmentBatch>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Splits `examples` into consecutive padded batches, preserving order.
///
/// `heuristics`, when given, is aligned with `examples` and holds one map per
/// segment.
///
/// # Panics
/// If `batch_size` is zero or the examples mix tasks.
pub fn batchify(
    examples: &[Example],
    vocab: &Vocabulary,
    heuristics: Option<&[Option<Vec<Vec<f64>>>]>,
    batch_size: usize,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    if let Some(h) = heuristics {
        assert_eq!(
            h.len(),
            examples.len(),
            "heuristics must align with examples"
        );
    }
    examples
        .chunks(batch_size)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let offset = chunk_idx * batch_size;
            let task = chunk[0].task;
            assert!(
                chunk.iter().all(|e| e.task == task),
                "mixed tasks in one batch"
            );
            let segments = (0..task.num_segments())
                .map(|s| {
                    let encoded: Vec<Vec<u32>> =
                        chunk.iter().map(|e| vocab.encode(&e.segments[s])).collect();
                    let max_len = encoded.iter().map(Vec::len).max().unwrap_or(0);
                    let lengths: Vec<usize> = encoded.iter().map(Vec::len).collect();
                    let ids = encoded
                        .into_iter()
                        .map(|mut row| {
                            row.resize(max_len, PAD_ID);
                            row
                        })
                        .collect();
                    let mask = lengths
                        .iter()
                        .map(|&l| (0..max_len).map(|i| u8::from(i < l)).collect())
                        .collect();
                    let annotations = chunk
                        .iter()
                        .map(|e| e.annotation.as_ref().map(|a| a[s].clone()))
                        .collect();
                    let heuristics = (0..chunk.len())
                        .map(|r| {
                            heuristics
                                .and_then(|h| h[offset + r].as_ref())
                                .map(|maps| maps[s].clone())
                        })
                        .collect();
                    SegmentBatch {
                        ids,
                        lengths,
                        mask,
                        annotations,
                        heuristics,
                    }
                })
                .collect();
            Batch {
                example_ids: chunk.iter().map(|e| e.id.clone()).collect(),
                task,
                segments,
                labels: chunk.iter().map(|e| e.label).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Pos, Token};

    fn ex(id: usize, len: usize) -> Example {
        Example {
            id: id.to_string(),
            task: Task::Classification,
            segments: vec![(0..len)
                .map(|i| Token::new(format!("w{i}"), format!("w{i}"), Pos::Noun))
                .collect()],
            label: id % 2,
            annotation: None,
        }
    }

    #[test]
    fn batch_sizes_follow_arithmetic() {
        let exs: Vec<_> = (0..10).map(|i| ex(i, 3)).collect();
        let vocab = Vocabulary::build(&exs, 1);
        let sizes: Vec<_> = batchify(&exs, &vocab, None, 4)
            .iter()
            .map(Batch::len)
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let order: Vec<String> = batchify(&exs, &vocab, None, 4)
            .into_iter()
            .flat_map(|b| b.example_ids)
            .collect();
        assert_eq!(order, (0..10).map(|i| i.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn masks_match_lengths() {
        let exs = vec![ex(0, 3), ex(1, 5)];
        let vocab = Vocabulary::build(&exs, 1);
        let b = &batchify(&exs, &vocab, None, 2)[0];
        assert_eq!(b.segments[0].mask[0], vec![1, 1, 1, 0, 0]);
        assert_eq!(b.segments[0].mask[1], vec![1; 5]);
        assert_eq!(b.segments[0].ids[0][3], PAD_ID);

        let single = vec![ex(0, 5)];
        let b = &batchify(&single, &vocab, None, 1)[0];
        assert_eq!(b.segments[0].mask[0], vec![1; 5]);
    }
}
