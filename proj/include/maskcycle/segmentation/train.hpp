#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maskcycle/segmentation/model.hpp"
#include "maskcycle/synthesis/manifest.hpp"

namespace maskcycle::segmentation {

struct TrainConfig {
    int epochs = 20;
    double learning_rate = 1e-3; // 0 is accepted and leaves the model untouched
    Index batch_size = 4;
    std::uint64_t seed = 0;
    bool augment_flip = true;
    int checkpoint_every = 1; // epochs between last.ckpt writes; 0 disables
    double threshold = 0.5;   // binarization for validation metrics
    unsigned workers = 1;     // data-loading threads

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_bce = 0;
    double val_dice = 0; // NaN without a validation set
    double val_iou = 0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_dice = 0;
};

// Optimizes per-pixel BCE over `train_set`. After each epoch the model is
// scored on `val_set`; on return the model holds the parameters of the epoch
// with the highest validation Dice (the final epoch when `val_set` is empty).
//
// With a non-empty `out_dir`, writes history.csv (epoch, train_bce, val_dice,
// val_iou), last.ckpt on the configured cadence and best.ckpt.
TrainResult train(SegmentationModel& model, const DatasetManifest& train_set, const DatasetManifest& val_set,
                  const TrainConfig& config, const std::filesystem::path& out_dir = {});

// Continues training an existing model on curated pairs.
TrainResult fine_tune(SegmentationModel& model, const DatasetManifest& curated, const DatasetManifest& val_set,
                      const TrainConfig& config, const std::filesystem::path& out_dir = {});

// In-memory variant used by `train`; samples must already be validated.
TrainResult train_on_samples(SegmentationModel& model, const std::vector<MaskedSample>& train_set,
                             const std::vector<MaskedSample>& val_set, const TrainConfig& config,
                             const std::filesystem::path& out_dir = {});

std::string history_csv_header();

} // namespace maskcycle::segmentation
