#pragma once

#include "nepadd/config.hpp"
#include "nepadd/datagen.hpp"

namespace nepadd::testing {

// Few short utterances and narrow models: a full train_padd run in well
// under a second.
inline RunConfig tiny_run_config(Aggregation mode = Aggregation::None) {
  RunConfig c;
  c.corpus.seed = 1;
  c.corpus.n_train = 12;
  c.corpus.n_dev = 6;
  c.corpus.n_eval = 6;
  c.corpus.min_frames = 24;
  c.corpus.max_frames = 32;
  c.corpus.min_entity_frames = 3;
  c.corpus.max_entity_frames = 6;
  c.corpus.max_segments = 3;
  c.corpus.min_segment_frames = 2;
  c.corpus.max_segment_frames = 4;
  c.corpus.feature_dim = 6;
  c.corpus.reserved_dims = 2;
  c.corpus.spoof_subspace_dims = 2;
  c.padd.input_dim = 6;
  c.padd.conv_channels = 6;
  c.padd.residual_blocks = 1;
  c.padd.model_dim = 6;
  c.ner.input_dim = 6;
  c.ner.conv_channels = 6;
  c.ner.lstm_hidden = 3;
  c.classifier.model_dim = 6;
  c.classifier.layers = 1;
  c.classifier.heads = 2;
  c.classifier.ff_dim = 8;
  c.classifier.lstm_hidden = 3;
  c.classifier.fc_dim = 6;
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.train.warmup_steps = 3;
  c.train.base_lr = 1e-3;
  c.train.eval_every = 2;
  c.train.aggregation = mode;
  if (mode == Aggregation::Transfer) c.transfer.lambda_kl = 0.5;
  c.teacher_train.epochs = 2;
  c.teacher_train.batch_size = 4;
  return c;
}

}  // namespace nepadd::testing
