// Copyright 2026 The cvnmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Parallel-corpus ingestion, vocabularies, batching and synthetic corpora.

mod batch;
mod corpus;
mod synth;
mod vocab;

pub use batch::{make_batches, make_batches_with_rng, Batch, PaddedIds, BUCKET_WINDOW_BATCHES};
pub use corpus::{encode_pairs, filter_pairs, load_parallel, read_lines, tokenize, wrap_target, LoadReport, SentencePair, TextPair};
pub use synth::{is_reversed, synth_corpus, synth_token, SynthKind, MAX_SENTENCE_LEN, MIN_SENTENCE_LEN};
pub use vocab::{build_vocab, is_special, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};
