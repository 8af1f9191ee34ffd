#include "maskcycle/segmentation/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "maskcycle/common/parallel.hpp"
#include "maskcycle/common/prefetch.hpp"
#include "maskcycle/metrics/metrics.hpp"
#include "maskcycle/nn/convert.hpp"
#include "maskcycle/nn/optim.hpp"

namespace maskcycle::segmentation {

namespace fs = std::filesystem;

void TrainConfig::validate() const
{
    if (epochs < 1)
        throw ConfigError("epochs must be at least 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate))
        throw ConfigError("learning rate must be finite and non-negative");
    if (batch_size < 1)
        throw ConfigError("batch size must be at least 1");
    if (checkpoint_every < 0)
        throw ConfigError("checkpoint_every must be non-negative");
    if (!(threshold >= 0 && threshold <= 1))
        throw ConfigError("threshold must lie in [0,1]");
}

std::string history_csv_header() { return "epoch,train_bce,val_dice,val_iou"; }

namespace {

struct Example {
    nn::Tensor<float> image;  // 1 x 3 x H' x W', padded
    nn::Tensor<float> target; // 1 x 1 x H' x W'
    nn::Tensor<float> weight; // 1 on the original pixels, 0 on padding
};

Example make_example(const MaskedSample& s, bool flip, Index factor)
{
    const ImageBuffer image = flip ? flip_horizontal(s.image) : s.image;
    const BinaryMask mask = flip ? flip_horizontal(s.mask) : s.mask;
    const Padding pad = padding_for(image.height(), image.width(), factor);
    const std::array<ImageBuffer, 1> images{reflect_pad(image, pad)};
    const std::array<BinaryMask, 1> masks{reflect_pad(mask, pad)};
    Example e{nn::images_to_tensor<float>(images, nn::Range::Unit), nn::masks_to_tensor<float>(masks), {}};
    e.weight = nn::Tensor<float>(e.target.shape());
    for (Index y = 0; y < image.height(); ++y)
        for (Index x = 0; x < image.width(); ++x)
            e.weight.at(0, 0, y + pad.top, x + pad.left) = 1.0f;
    return e;
}

std::string csv_double(double v)
{
    if (std::isnan(v))
        return "nan";
    std::ostringstream out;
    out.precision(9);
    out << v;
    return out.str();
}

std::vector<MaskedSample> load_all(const DatasetManifest& manifest, unsigned workers)
{
    std::vector<MaskedSample> out(manifest.size());
    parallel_for(manifest.size(), workers, [&](std::size_t i) { out[i] = manifest.load_sample(manifest.entries()[i]); });
    return out;
}

} // namespace

TrainResult train_on_samples(SegmentationModel& model, const std::vector<MaskedSample>& train_set,
                             const std::vector<MaskedSample>& val_set, const TrainConfig& config,
                             const fs::path& out_dir)
{
    config.validate();
    if (train_set.empty())
        throw DataError("training set is empty");
    if (!out_dir.empty())
        fs::create_directories(out_dir);

    std::ofstream history;
    if (!out_dir.empty()) {
        history.open(out_dir / "history.csv", std::ios::trunc);
        if (!history)
            throw IoError("cannot write " + (out_dir / "history.csv").string());
        history << history_csv_header() << '\n' << std::flush;
    }

    auto params = model.parameters();
    nn::Adam<float> adam(params);
    const Index factor = model.config().downsampling_factor();
    const std::size_t n = train_set.size();

    TrainResult result;
    std::vector<nn::Parameter<float>::Matrix> best_values;
    bool have_best = false;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = substream(config.seed, static_cast<std::uint64_t>(epoch), fnv1a64("segmentation.shuffle"));
        std::shuffle(order.begin(), order.end(), shuffle);

        OrderedPrefetcher<Example> loader(
            n,
            [&](std::size_t i) {
                Rng aug = substream(config.seed, static_cast<std::uint64_t>(epoch) * n + i,
                                    fnv1a64("segmentation.augment"));
                const bool flip = config.augment_flip && std::bernoulli_distribution(0.5)(aug);
                return make_example(train_set[order[i]], flip, factor);
            },
            config.workers, 2 * static_cast<std::size_t>(config.batch_size));

        double epoch_loss = 0;
        std::size_t seen = 0;
        while (seen < n) {
            const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n - seen);
            nn::zero_grad(params);
            for (std::size_t b = 0; b < batch; ++b) {
                const Example e = *loader.next();
                nn::Tensor<float> grad;
                const nn::Tensor<float> logits = model.net().forward(e.image);
                const float loss = bce_with_logits(logits, e.target, &grad, &e.weight);
                if (!std::isfinite(loss))
                    throw NumericError("non-finite BCE at epoch " + std::to_string(epoch) + ", sample " +
                                       train_set[order[seen + b]].source_id + " (position " +
                                       std::to_string(seen + b) + ")");
                grad.values() /= static_cast<float>(batch);
                model.net().backward(grad);
                epoch_loss += loss;
            }
            adam.step(config.learning_rate);
            seen += batch;
        }

        EpochRecord rec{epoch, epoch_loss / static_cast<double>(n), std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
        if (!val_set.empty()) {
            double d = 0, j = 0;
            for (const MaskedSample& s : val_set) {
                const BinaryMask pred = predict(model, s.image, config.threshold).mask;
                d += metrics::dice(pred, s.mask);
                j += metrics::iou(pred, s.mask);
            }
            rec.val_dice = d / static_cast<double>(val_set.size());
            rec.val_iou = j / static_cast<double>(val_set.size());
        }
        ++model.epochs_trained;
        result.history.push_back(rec);
        if (history)
            history << rec.epoch << ',' << csv_double(rec.train_bce) << ',' << csv_double(rec.val_dice) << ','
                    << csv_double(rec.val_iou) << '\n'
                    << std::flush;

        // Strict improvement only, so ties keep the earlier epoch.
        const bool improved = val_set.empty() || !have_best || rec.val_dice > result.best_val_dice;
        if (improved) {
            have_best = true;
            result.best_epoch = epoch;
            result.best_val_dice = rec.val_dice;
            best_values.clear();
            for (auto* p : params)
                best_values.push_back(p->value);
            if (!out_dir.empty())
                save_checkpoint(model, out_dir / "best.ckpt");
        }
        if (!out_dir.empty() && config.checkpoint_every > 0 &&
            (epoch % config.checkpoint_every == 0 || epoch == config.epochs))
            save_checkpoint(model, out_dir / "last.ckpt");
    }

    const std::int64_t epochs_trained = model.epochs_trained;
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i]->value = best_values[i];
    model.epochs_trained = epochs_trained;
    return result;
}

TrainResult train(SegmentationModel& model, const DatasetManifest& train_set, const DatasetManifest& val_set,
                  const TrainConfig& config, const fs::path& out_dir)
{
    config.validate();
    if (train_set.empty())
        throw DataError("training manifest is empty");
    train_set.validate();
    if (!val_set.empty())
        val_set.validate();
    return train_on_samples(model, load_all(train_set, config.workers), load_all(val_set, config.workers), config,
                            out_dir);
}

TrainResult fine_tune(SegmentationModel& model, const DatasetManifest& curated, const DatasetManifest& val_set,
                      const TrainConfig& config, const fs::path& out_dir)
{
    if (curated.empty())
        throw DataError("no curated samples to fine-tune on");
    return train(model, curated, val_set, config, out_dir);
}

} // namespace maskcycle::segmentation
