// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "fixtures.hpp"
#include "qdbench/training.hpp"

using namespace qdbench;

TEST_CASE("every family lowers its training loss over 20 epochs") {
  const auto set = testing::labeled(testing::synthetic_patches(20, 10));
  REQUIRE(set.size() == 200);
  const auto folds = stratified_folds(set.labels(), 5, 0);
  const FoldData fd = fold_data(set, folds, 0);
  for (Family f : kAllFamilies) {
    CAPTURE(to_string(f));
    TrainConfig c = default_train_config(f);
    c.max_epochs = 20;
    c.patience = 19;
    c.batch_size = 32;
    const TrainedFold tf = train_one_fold(7, fd, c);
    REQUIRE(tf.result.epochs_run == 20);
    MESSAGE(to_string(f), ": epoch 1 ", tf.result.curve.front().train_loss, " -> epoch 20 ",
            tf.result.curve.back().train_loss);
    CHECK(tf.result.curve.back().train_loss < tf.result.curve.front().train_loss);
  }
}
