#pragma once

// Training loop: per-epoch upsampling and pruning, per-batch SDF
// regularization, rendering, losses and an Adam step; evaluation on held-out
// frames; CSV metrics log.

#include "handsplat/adam.hpp"
#include "handsplat/io/files.hpp"
#include "handsplat/losses.hpp"
#include "handsplat/metrics.hpp"
#include "handsplat/model.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <set>

namespace handsplat {

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-4;
  double appearance_learning_rate = 0.0;  // albedo and shading networks; 0 = learning_rate
  int batch_size = 16;
  int upsample_every = 5;
  int geometry_freeze_epoch = 35;
  std::uint64_t seed = 0;
  int width = 0, height = 0;  // expected frame resolution; 0 accepts the dataset's

  LossWeights weights;

  bool prune = true;
  double prune_max_fraction = 0.5;
  std::size_t reg_samples = 2048;      // canonical points per step in the SDF term; 0 = all
  std::size_t sdf_warmup_steps = 1000;  // fit to the template before the first epoch
  int eval_every = 0;                  // epochs between held-out evaluations; 0 = last epoch only
  bool verbose = false;

  std::string log_path;         // CSV metrics log
  std::string checkpoint_path;  // written at the end; on failure the last good state goes to <path>.last_good

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (upsample_every < 1) throw std::invalid_argument("upsample_every must be at least 1");
    if (geometry_freeze_epoch > epochs) throw std::invalid_argument("geometry_freeze_epoch must not exceed epochs");
    if (geometry_freeze_epoch < 0) throw std::invalid_argument("geometry_freeze_epoch must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be positive");
    if (!(appearance_learning_rate >= 0.0) || !std::isfinite(appearance_learning_rate))
      throw std::invalid_argument("appearance_learning_rate must be nonnegative");
    if (width < 0 || height < 0) throw std::invalid_argument("resolution must be nonnegative");
    if (!(prune_max_fraction > 0.0 && prune_max_fraction <= 1.0))
      throw std::invalid_argument("prune_max_fraction must lie in (0, 1]");
    if (eval_every < 0) throw std::invalid_argument("eval_every must be nonnegative");
    weights.validate();
  }
};

// ---------------------------------------------------------------------------
// Config files: JSON objects whose keys are the field names above; loss
// weights may sit at top level or under "weights".

namespace detail {

inline void apply_weight(LossWeights& w, const std::string& key, const nlohmann::json& v) {
  static const std::map<std::string, double LossWeights::*> fields = {
      {"lambda_rgb", &LossWeights::lambda_rgb}, {"lambda_vgg", &LossWeights::lambda_vgg},
      {"lambda_mask", &LossWeights::lambda_mask}, {"lambda_reg", &LossWeights::lambda_reg},
      {"lambda_sdf", &LossWeights::lambda_sdf}, {"lambda_eik", &LossWeights::lambda_eik}};
  auto it = fields.find(key);
  if (it == fields.end()) throw std::invalid_argument(fmt::format("unknown loss weight '{}'", key));
  w.*(it->second) = v.get<double>();
}

}  // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "appearance_learning_rate") c.appearance_learning_rate = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "upsample_every") c.upsample_every = v.get<int>();
    else if (key == "geometry_freeze_epoch") c.geometry_freeze_epoch = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "width") c.width = v.get<int>();
    else if (key == "height") c.height = v.get<int>();
    else if (key == "prune") c.prune = v.get<bool>();
    else if (key == "prune_max_fraction") c.prune_max_fraction = v.get<double>();
    else if (key == "reg_samples") c.reg_samples = v.get<std::size_t>();
    else if (key == "sdf_warmup_steps") c.sdf_warmup_steps = v.get<std::size_t>();
    else if (key == "eval_every") c.eval_every = v.get<int>();
    else if (key == "verbose") c.verbose = v.get<bool>();
    else if (key == "log_path") c.log_path = v.get<std::string>();
    else if (key == "checkpoint_path") c.checkpoint_path = v.get<std::string>();
    else if (key == "weights") {
      for (const auto& [wk, wv] : v.items()) detail::apply_weight(c.weights, wk, wv);
    } else if (key.rfind("lambda_", 0) == 0) {
      detail::apply_weight(c.weights, key, v);
    } else {
      throw std::invalid_argument(fmt::format("unknown training config key '{}'", key));
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  const auto& w = c.weights;
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"appearance_learning_rate", c.appearance_learning_rate},
          {"batch_size", c.batch_size},
          {"upsample_every", c.upsample_every},
          {"geometry_freeze_epoch", c.geometry_freeze_epoch},
          {"seed", c.seed},
          {"width", c.width},
          {"height", c.height},
          {"prune", c.prune},
          {"prune_max_fraction", c.prune_max_fraction},
          {"reg_samples", c.reg_samples},
          {"sdf_warmup_steps", c.sdf_warmup_steps},
          {"eval_every", c.eval_every},
          {"verbose", c.verbose},
          {"log_path", c.log_path},
          {"checkpoint_path", c.checkpoint_path},
          {"weights",
           {{"lambda_rgb", w.lambda_rgb},
            {"lambda_vgg", w.lambda_vgg},
            {"lambda_mask", w.lambda_mask},
            {"lambda_reg", w.lambda_reg},
            {"lambda_sdf", w.lambda_sdf},
            {"lambda_eik", w.lambda_eik}}}};
}

inline TrainConfig load_train_config(const std::string& path) {
  try {
    return train_config_from_json(io::read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("{}: {}", path, e.what()));
  }
}

// ---------------------------------------------------------------------------

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image part of the loss for one frame: lambda_rgb L_rgb + lambda_vgg L_vgg +
/// lambda_mask L_mask.
struct FrameLoss {
  ad::Var total, rgb, vgg, mask;
};

inline FrameLoss frame_loss(const HandModel::Frame& f, const FrameSample& s, const std::vector<Tensor>& target_features,
                            const PerceptualExtractor& vgg, const LossWeights& w) {
  FrameLoss l;
  l.rgb = rgb_loss(f.rgb, s.rgb, s.mask, false);
  l.vgg = vgg.loss(f.rgb, target_features, s.height(), s.width());
  l.mask = mask_loss(f.alpha, s.mask);
  l.total = ad::add(ad::add(ad::scale(l.rgb, w.lambda_rgb), ad::scale(l.vgg, w.lambda_vgg)),
                    ad::scale(l.mask, w.lambda_mask));
  return l;
}

/// Mean metrics over frames rendered by the model.
inline ImageMetrics evaluate(HandModel& m, const std::vector<const FrameSample*>& frames) {
  ImageMetrics mean;
  if (frames.empty()) return mean;
  for (const FrameSample* s : frames) {
    const auto img = m.render_image(s->pose, s->camera);
    const ImageMetrics r = evaluate_metrics(img.rgb, s->rgb, img.alpha, s->mask, s->height(), s->width());
    mean.iou += r.iou;
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
  }
  const double n = static_cast<double>(frames.size());
  mean.iou /= n;
  mean.psnr /= n;
  mean.ssim /= n;
  return mean;
}

inline ImageMetrics evaluate(HandModel& m, const std::vector<FrameSample>& frames) {
  std::vector<const FrameSample*> p;
  for (const auto& f : frames) p.push_back(&f);
  return evaluate(m, p);
}

/// Rows of the metrics log. `kind` is "step" or "eval".
struct LogRow {
  std::string kind;
  int epoch = 0;
  std::size_t step = 0;
  LossParts loss;
  std::size_t n_points = 0;
  double radius = 0.0;
  double psnr = std::nan(""), ssim = std::nan(""), iou = std::nan("");
  double ms_per_frame = 0.0;
};

inline std::string log_header() {
  return "kind,epoch,step,rgb,vgg,mask,reg,sdf,eik,total,lambda_rgb,lambda_vgg,lambda_mask,lambda_reg,lambda_sdf,"
         "lambda_eik,n_points,radius,psnr,ssim,iou,ms_per_frame";
}

inline std::string log_line(const LogRow& r, const LossWeights& w) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : fmt::format("{:.9g}", v); };
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3f}", r.kind, r.epoch, r.step,
                     num(r.loss.rgb), num(r.loss.vgg), num(r.loss.mask), num(r.loss.reg), num(r.loss.sdf),
                     num(r.loss.eik), num(r.loss.total), w.lambda_rgb, w.lambda_vgg, w.lambda_mask, w.lambda_reg,
                     w.lambda_sdf, w.lambda_eik, r.n_points, num(r.radius), num(r.psnr), num(r.ssim), num(r.iou),
                     r.ms_per_frame);
}

struct TrainResult {
  ImageMetrics val;  // last held-out evaluation (zeros without val frames)
  std::size_t steps = 0;
  std::size_t points = 0;
  double seconds = 0.0;
  std::vector<LogRow> log;
};

/// Batches of frame indices: frames sharing a pose stay adjacent, pose groups
/// are shuffled.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<FrameSample>& data,
                                                          const std::vector<std::size_t>& frames, int batch_size,
                                                          std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> slot;
  for (std::size_t i : frames) {
    auto [it, fresh] = slot.emplace(data[i].pose_key.empty() ? data[i].name : data[i].pose_key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::shuffle(groups.begin(), groups.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  for (const auto& g : groups)
    for (std::size_t i : g) {
      cur.push_back(i);
      if (static_cast<int>(cur.size()) == batch_size) batches.push_back(std::exchange(cur, {}));
    }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

/// Sorted random subset of [0, n) of size k (all of it when k == 0 or k >= n).
inline std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k == 0 || k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// The training loop, exposed step by step. Epochs are 1-based: epoch e
/// upsamples first when e % upsample_every == 0 and e <= geometry_freeze_epoch,
/// ends with a prune while e <= geometry_freeze_epoch, and freezes the point
/// coordinates and the SDF afterwards.
class Trainer {
 public:
  using clock = std::chrono::steady_clock;

  // The frames are held by reference.
  Trainer(HandModel&, std::vector<FrameSample>&&, TrainConfig) = delete;
  Trainer(HandModel& m, const std::vector<FrameSample>& data, TrainConfig cfg)
      : m_(m), data_(data), cfg_(std::move(cfg)), rng_(cfg_.seed), t_start_(clock::now()) {
    cfg_.validate();
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const FrameSample& s = data_[i];
      if (cfg_.width && (s.width() != cfg_.width || s.height() != cfg_.height))
        throw std::invalid_argument(fmt::format("frame {} is {}x{} but the config expects {}x{}", i, s.width(),
                                                s.height(), cfg_.width, cfg_.height));
      if (s.split == "val") val_.push_back(&s);
      else train_.push_back(i);
    }
    if (train_.empty()) throw std::invalid_argument("train: dataset has no training frames");
    features_.resize(data_.size());
    silhouettes_.resize(data_.size());
    for (std::size_t i : train_) {
      features_[i] = vgg_.target_features(data_[i].rgb, data_[i].height(), data_[i].width());
      silhouettes_[i] = template_silhouette(m_.rig, data_[i].pose, data_[i].camera, 2.0);
    }
    if (!cfg_.log_path.empty()) {
      log_.open(cfg_.log_path);
      if (!log_) throw std::runtime_error(fmt::format("cannot open {} for writing", cfg_.log_path));
      log_ << log_header() << '\n';
    }
    if (cfg_.sdf_warmup_steps > 0) {
      SdfWarmStartConfig warm;
      warm.steps = cfg_.sdf_warmup_steps;
      warm_start_sdf(m_, warm);
    }
    last_good_ = model_to_container(m_);
  }

  const TrainConfig& config() const { return cfg_; }
  const std::vector<std::size_t>& train_frames() const { return train_; }
  const std::vector<const FrameSample*>& val_frames() const { return val_; }
  TrainResult& result() { return result_; }

  bool geometry_live(int epoch) const { return epoch <= cfg_.geometry_freeze_epoch; }

  void begin_epoch(int epoch) {
    epoch_ = epoch;
    const bool live = geometry_live(epoch);
    if (live && epoch % cfg_.upsample_every == 0) upsample(m_.points, m_.rig, rng_);
    m_.points.reset_visibility();
    m_.points.coords.frozen = !live;
    m_.sdf.set_frozen(!live);
    if (live || !normals_frozen_) normals_valid_ = false;
    normals_frozen_ = !live;
  }

  std::vector<std::vector<std::size_t>> epoch_batches() { return make_batches(data_, train_, cfg_.batch_size, rng_); }

  /// Loss terms of a batch at the current parameters; no update, and the
  /// trainer's random stream is not advanced.
  LossParts loss(const std::vector<std::size_t>& batch) {
    ad::Tape tape;
    std::mt19937_64 rng = rng_;
    return forward(tape, batch, rng).parts;
  }

  /// One optimizer step on the given frames; returns the logged loss terms.
  LossParts step(const std::vector<std::size_t>& batch) {
    try {
      return step_impl(batch);
    } catch (const NonFiniteError& e) {
      throw fail(fmt::format("epoch {} step {}: {}", epoch_, result_.steps + 1, e.what()));
    }
  }

  void end_epoch() {
    if (geometry_live(epoch_) && cfg_.prune) {
      try {
        prune(m_.points, m_.rig, cfg_.prune_max_fraction);
      } catch (const PruneError& e) {
        throw fail(fmt::format("epoch {}: {}", epoch_, e.what()));
      }
    }
    last_good_ = model_to_container(m_);
    const bool last = epoch_ == cfg_.epochs;
    if (!val_.empty() && (last || (cfg_.eval_every > 0 && epoch_ % cfg_.eval_every == 0))) {
      const auto t0 = clock::now();
      const ImageMetrics mt = evaluate(m_, val_);
      LogRow row;
      row.kind = "eval";
      row.epoch = epoch_;
      row.step = result_.steps;
      row.loss.rgb = row.loss.vgg = row.loss.mask = row.loss.reg = row.loss.sdf = row.loss.eik = row.loss.total =
          std::nan("");
      row.n_points = m_.points.size();
      row.radius = m_.points.radius;
      row.psnr = mt.psnr;
      row.ssim = mt.ssim;
      row.iou = mt.iou;
      row.ms_per_frame = ms_since(t0) / static_cast<double>(val_.size());
      emit(row);
      result_.val = mt;
    }
    if (cfg_.verbose) {
      std::fprintf(stderr, "epoch %d/%d  points %zu  radius %.5f  loss %.5f", epoch_, cfg_.epochs, m_.points.size(),
                   m_.points.radius, last_loss_);
      if (!result_.log.empty() && result_.log.back().kind == "eval") {
        const LogRow& r = result_.log.back();
        std::fprintf(stderr, "  val psnr %.2f ssim %.4f iou %.4f", r.psnr, r.ssim, r.iou);
      }
      std::fprintf(stderr, "  %.0fs\n", std::chrono::duration<double>(clock::now() - t_start_).count());
    }
  }

  TrainResult run() {
    for (int e = 1; e <= cfg_.epochs; ++e) {
      begin_epoch(e);
      for (const auto& b : epoch_batches()) step(b);
      end_epoch();
    }
    m_.points.coords.frozen = false;
    m_.sdf.set_frozen(false);
    if (!cfg_.checkpoint_path.empty()) save_model(cfg_.checkpoint_path, m_);
    result_.points = m_.points.size();
    result_.seconds = std::chrono::duration<double>(clock::now() - t_start_).count();
    return result_;
  }

 private:
  static double ms_since(clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  }

  void emit(const LogRow& r) {
    result_.log.push_back(r);
    if (log_) log_ << log_line(r, cfg_.weights) << '\n' << std::flush;
  }

  TrainingError fail(const std::string& what) {
    if (!cfg_.checkpoint_path.empty()) save_container(cfg_.checkpoint_path + ".last_good", last_good_);
    return TrainingError(what);
  }

  struct Forward {
    ad::Var loss;
    LossParts parts;
    std::vector<ad::Var> projected;
    double render_ms = 0.0;
  };

  /// Batch loss: mean of the per-frame image terms plus lambda_reg times the
  /// SDF term on a subsample drawn from `rng`.
  Forward forward(ad::Tape& tape, const std::vector<std::size_t>& batch, std::mt19937_64& rng) {
    if (batch.empty()) throw std::invalid_argument("train step: empty batch");
    const LossWeights& w = cfg_.weights;
    const bool live = geometry_live(epoch_);
    ad::Var coords = tape.param(m_.points.coords);
    Forward out;
    LossParts& parts = out.parts;
    ad::Var reg = tape.constant(Tensor::scalar(0.0));
    if (live) {
      const auto idx = random_subset(m_.points.size(), cfg_.reg_samples, rng);
      const Tensor omega_all = sample_omega(m_.points, rng);
      Tensor omega(idx.size(), 3);
      for (std::size_t k = 0; k < idx.size(); ++k) std::copy_n(omega_all.data() + 3 * idx[k], 3, omega.data() + 3 * k);
      const auto r = regularization_loss(m_.sdf, tape, ad::gather_rows(coords, idx), omega);
      parts.sdf = r.sdf_mean.value().item();
      parts.eik = r.eik_mean.value().item();
      reg = ad::add(ad::scale(r.sdf_mean, w.lambda_sdf), ad::scale(r.eik_mean, w.lambda_eik));
    }
    // Shading features take the SDF normals as constants; after the freeze
    // they are computed once.
    if (live || !normals_valid_) {
      normals_ = m_.canonical_normals();
      normals_valid_ = true;
    }
    parts.reg = reg.value().item();

    ad::Var albedo = m_.albedo_colors(tape, coords);
    std::map<std::string, ad::Var> colors_by_pose;
    ad::Var image_total = tape.constant(Tensor::scalar(0.0));
    for (std::size_t i : batch) {
      const FrameSample& s = data_.at(i);
      const std::string key = s.pose_key.empty() ? s.name : s.pose_key;
      auto it = colors_by_pose.find(key);
      if (it == colors_by_pose.end())
        it = colors_by_pose.emplace(key, m_.point_colors(tape, albedo, m_.normal_deformation(normals_, s.pose))).first;
      const auto t0 = clock::now();
      const HandModel::Frame f = m_.render(tape, coords, it->second, s.pose, s.camera);
      out.render_ms += ms_since(t0);
      if (features_[i].empty()) features_[i] = vgg_.target_features(s.rgb, s.height(), s.width());
      const FrameLoss l = frame_loss(f, s, features_[i], vgg_, w);
      parts.rgb += l.rgb.value().item();
      parts.vgg += l.vgg.value().item();
      parts.mask += l.mask.value().item();
      image_total = ad::add(image_total, l.total);
      out.projected.push_back(f.projected);
    }
    const double nb = static_cast<double>(batch.size());
    parts.rgb /= nb;
    parts.vgg /= nb;
    parts.mask /= nb;
    out.loss = ad::add(ad::scale(image_total, 1.0 / nb), ad::scale(reg, w.lambda_reg));
    parts.total = out.loss.value().item();
    return out;
  }

  LossParts step_impl(const std::vector<std::size_t>& batch) {
    for (auto* p : m_.parameters()) p->zero_grad();
    ad::Tape tape;
    const Forward fw = forward(tape, batch, rng_);
    const LossParts& parts = fw.parts;
    const double nb = static_cast<double>(batch.size());
    const auto& projected = fw.projected;
    const double render_ms = fw.render_ms;
    if (!std::isfinite(parts.total)) throw NonFiniteError("total loss is not finite");
    tape.backward(fw.loss);
    adam_.step(m_.geometry_parameters(), cfg_.learning_rate);
    adam_.step(m_.appearance_parameters(),
               cfg_.appearance_learning_rate > 0.0 ? cfg_.appearance_learning_rate : cfg_.learning_rate);
    for (auto* p : m_.parameters())
      if (!p->value.all_finite()) throw NonFiniteError(p->name + " became non-finite");
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t i = batch[k];
      if (silhouettes_[i].empty()) silhouettes_[i] = template_silhouette(m_.rig, data_[i].pose, data_[i].camera, 2.0);
      mark_visibility(splats_of(projected[k].value()), silhouettes_[i], data_[i].width(), data_[i].height(),
                      m_.points.visible);
    }
    last_loss_ = parts.total;
    LogRow row;
    row.kind = "step";
    row.epoch = epoch_;
    row.step = ++result_.steps;
    row.loss = parts;
    row.n_points = m_.points.size();
    row.radius = m_.points.radius;
    row.ms_per_frame = render_ms / nb;
    emit(row);
    return parts;
  }

  HandModel& m_;
  const std::vector<FrameSample>& data_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  clock::time_point t_start_;
  PerceptualExtractor vgg_;
  Adam adam_;
  std::vector<std::size_t> train_;
  std::vector<const FrameSample*> val_;
  std::vector<std::vector<Tensor>> features_;
  std::vector<std::vector<std::uint8_t>> silhouettes_;
  std::ofstream log_;
  TensorMap last_good_;
  TrainResult result_;
  RowMatrix normals_;
  bool normals_valid_ = false, normals_frozen_ = false;
  int epoch_ = 0;
  double last_loss_ = std::nan("");
};

inline TrainResult train(HandModel& m, const std::vector<FrameSample>& data, const TrainConfig& cfg) {
  return Trainer(m, data, cfg).run();
}

}  // namespace handsplat
