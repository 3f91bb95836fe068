#pragma once

// Optimisation loop: total objective, learning-rate schedule, batching,
// checkpoint/resume and the per-epoch metrics CSV.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "seldist/checkpoint.hpp"
#include "seldist/data.hpp"
#include "seldist/distill_select.hpp"
#include "seldist/distill_ts.hpp"
#include "seldist/networks.hpp"
#include "seldist/optim.hpp"

namespace seldist {

struct LossBreakdown {
  double total = 0, depth = 0, mask = 0, ts = 0, fd = 0, cd = 0, sd = 0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    total += o.total, depth += o.depth, mask += o.mask, ts += o.ts, fd += o.fd, cd += o.cd, sd += o.sd;
    return *this;
  }
  LossBreakdown scaled(double s) const { return {total * s, depth * s, mask * s, ts * s, fd * s, cd * s, sd * s}; }
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(const std::string& term)
      : std::runtime_error("non-finite loss term " + term + "; step aborted"), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct SampleObjective {
  ad::Var total;
  LossBreakdown parts;
};

inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.lr;
  for (int e : cfg.lr_halve_epochs)
    if (epoch >= e) lr *= 0.5;
  return lr;
}

inline Tensor valid_proxy(const Tensor& proxy) {
  Tensor v(proxy.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = proxy[i] > 0.0 ? 1.0 : 0.0;
  return v;
}

/// Disparity of decoder scale s resampled to full resolution, in full-resolution pixels.
inline ad::Var full_resolution_disparity(const ad::Var& d, int s, int H, int W) {
  if (s == 0) return d;
  return ad::scale(ad::resize_bilinear(d, H, W), static_cast<double>(1 << s));
}

/// Objective for one (already augmented) sample whose proxy_disparity is set.
/// `teacher` may be null when the T-S term is disabled. `masks_active` false
/// closes both gates in the depth loss (mask warm-up).
inline SampleObjective sample_objective(const StereoSample& s, const MonoNetOutputs& out, const FeaturePyramid* teacher,
                                        const TrainConfig& cfg, bool masks_active = true) {
  const int H = s.height(), W = s.width();
  const PhotometricConfig pc{cfg.weights.alpha};
  const StereoViews views{s.left, s.right};
  const Tensor& proxy = s.proxy_disparity;
  const Tensor proxy_ok = valid_proxy(proxy);
  const double inv_scales = 1.0 / kDecoderScales;

  ad::Var depth = ad::constant(Tensor::scalar(0.0));
  ad::Var mask = ad::constant(Tensor::scalar(0.0));
  for (int sc = 0; sc < kDecoderScales; ++sc) {
    const ad::Var d = full_resolution_disparity(out.disparity[static_cast<std::size_t>(sc)], sc, H, W);
    if (cfg.distill_mode == DistillMode::direct) {
      depth = ad::add(depth, direct_distillation_loss(views, proxy, d, pc));
      continue;
    }
    const ad::Var& raw = out.mask_logits[static_cast<std::size_t>(sc)];
    const ad::Var logits = sc == 0 ? raw : ad::resize_bilinear(raw, H, W);
    const ad::Var l_rc = ad::slice_channels(logits, 0, 1);
    const ad::Var l_sm = ad::slice_channels(logits, 1, 1);
    mask = ad::add(mask, mask_loss(views, l_rc, l_sm, proxy, d, pc));
    Tensor m_rc(proxy.shape()), m_sm(proxy.shape());
    if (masks_active) {
      m_rc = hard_from_logits(l_rc.value());
      m_sm = hard_from_logits(l_sm.value());
      for (std::size_t i = 0; i < m_rc.size(); ++i) {
        m_rc[i] *= proxy_ok[i];
        m_sm[i] *= proxy_ok[i];
      }
    }
    depth = ad::add(depth, depth_loss(views, m_rc, m_sm, proxy, d, pc));
  }
  depth = ad::scale(depth, inv_scales);
  mask = ad::scale(mask, inv_scales);

  SampleObjective o;
  o.parts.depth = depth.item();
  o.parts.mask = mask.item();
  ad::Var total = ad::add(depth, ad::scale(mask, cfg.weights.lambda_mask));
  if (cfg.ts_enabled()) {
    if (!teacher) throw std::invalid_argument("sample_objective: T-S enabled but no teacher features given");
    const TsLossTerms ts = ts_loss_terms(as_constants(*teacher), out.student, cfg.weights);
    o.parts.ts = ts.total.item();
    o.parts.fd = ts.fd.item();
    o.parts.cd = ts.cd.item();
    o.parts.sd = ts.sd.item();
    total = ad::add(total, ad::scale(ts.total, cfg.weights.lambda_ts));
  }
  o.total = total;
  o.parts.total = total.item();

  const std::pair<const char*, double> terms[] = {{"L_depth", o.parts.depth}, {"L_mask", o.parts.mask},
                                                   {"L_FD", o.parts.fd},       {"L_CD", o.parts.cd},
                                                   {"L_SD", o.parts.sd},       {"L_total", o.parts.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw NonFiniteLoss(name);
  return o;
}

/// Deterministic shuffled order of sample indices for an epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  auto rng = make_stream(seed, "shuffle", static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

inline int batches_per_epoch(std::size_t n, int batch) { return static_cast<int>((n + batch - 1) / batch); }

/// Training sample as seen at (epoch): proxy from the teacher, then augmentation.
inline StereoSample prepared_sample(const StereoSample& s, const ProxyTeacher& teacher, const TrainConfig& cfg, int epoch) {
  StereoSample p = s;
  p.proxy_disparity = teacher.proxy_disparity(s);
  if (cfg.augment) p = augment(p, derive_seed(cfg.seed, "augment", static_cast<std::uint64_t>(epoch), hash_string(s.id)));
  return p;
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown mean;
};

struct StepRecord {
  std::int64_t global_step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown mean;
  double grad_norm = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;            // empty: no files written
  std::optional<Checkpoint> resume;
  std::int64_t max_steps = -1;              // stop after this many steps in this call
  std::function<void(const StepRecord&)> on_step;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  Checkpoint final;
  std::uint64_t teacher_hash_before = 0;
  std::uint64_t teacher_hash_after = 0;
  bool stopped_early = false;
};

inline const char* metrics_csv_header() { return "epoch,lr,L_total,L_depth,L_mask,L_TS,L_FD,L_CD,L_SD"; }

inline std::string format_metrics_row(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(10) << r.epoch << ',' << r.lr << ',' << r.mean.total << ',' << r.mean.depth << ','
     << r.mean.mask << ',' << r.mean.ts << ',' << r.mean.fd << ',' << r.mean.cd << ',' << r.mean.sd;
  return os.str();
}

inline int resolve_threads(int t) {
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// One forward/backward per sample; gradients are reduced in sample order.
inline std::vector<Tensor> batch_gradients(const MonoNet& net, const std::vector<StereoSample>& batch,
                                           const std::vector<FeaturePyramid>& teacher, const TrainConfig& cfg,
                                           bool masks_active, LossBreakdown& mean) {
  const std::size_t n = batch.size();
  std::vector<std::vector<Tensor>> grads(n);
  std::vector<LossBreakdown> parts(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      ParameterBinding p(net.parameters(), true);
      const MonoNetOutputs out = net.forward(p, batch[i].left);
      SampleObjective o = sample_objective(batch[i], out, teacher.empty() ? nullptr : &teacher[i], cfg, masks_active);
      ad::backward(o.total);
      grads[i] = p.gradients();
      parts[i] = o.parts;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const int threads = std::min<int>(resolve_threads(cfg.threads), static_cast<int>(n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) work(i);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<Tensor> total = std::move(grads[0]);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += grads[i][k];
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& g : total) g *= inv;
  mean = LossBreakdown{};
  for (const auto& p : parts) mean += p;
  mean = mean.scaled(inv);
  return total;
}

inline Checkpoint snapshot(const MonoNet& net, const TrainConfig& cfg, const AdamState& adam, int epoch, int step_in_epoch,
                           std::int64_t global_step, std::uint64_t teacher_hash) {
  Checkpoint c;
  c.config = cfg;
  c.epoch = epoch;
  c.step_in_epoch = step_in_epoch;
  c.global_step = global_step;
  c.teacher_hash = teacher_hash;
  c.names = net.parameters().names();
  c.params = net.parameters().values();
  c.adam = adam;
  return c;
}

/// Trains `net` in place. Only MonoNet parameters are updated; the teacher hash is
/// re-checked at every epoch boundary.
inline TrainResult train(MonoNet& net, const ProxyTeacher& teacher, const std::vector<StereoSample>& data,
                         const TrainConfig& cfg, const TrainOptions& opt = {}) {
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  TrainResult result;
  result.teacher_hash_before = teacher.parameter_hash();

  AdamState adam;
  int epoch = 0, step_in_epoch = 0;
  std::int64_t global_step = 0;
  if (opt.resume) {
    restore_parameters(net.parameters(), *opt.resume);
    adam = opt.resume->adam;
    epoch = opt.resume->epoch;
    step_in_epoch = opt.resume->step_in_epoch;
    global_step = opt.resume->global_step;
    if (opt.resume->teacher_hash != 0 && opt.resume->teacher_hash != result.teacher_hash_before) {
      throw std::runtime_error("train: teacher differs from the one recorded in the checkpoint");
    }
  }

  std::ofstream csv;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    const auto path = opt.out_dir / "metrics.csv";
    const bool append = opt.resume && std::filesystem::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    if (!append) csv << metrics_csv_header() << "\n";
  }
  auto save = [&](int e, int s) {
    Checkpoint c = snapshot(net, cfg, adam, e, s, global_step, result.teacher_hash_before);
    if (!opt.out_dir.empty()) save_checkpoint(opt.out_dir / "checkpoint.bin", c);
    result.final = std::move(c);
  };

  const AdamParams ap{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  const int nb = batches_per_epoch(data.size(), cfg.batch_size);
  const auto shapes = net.student_shapes();
  std::int64_t steps_here = 0;

  for (; epoch < cfg.epochs; ++epoch, step_in_epoch = 0) {
    const double lr = lr_at(epoch, cfg);
    const auto order = epoch_order(data.size(), cfg.seed, epoch);
    const bool masks_active = epoch >= cfg.mask_warmup_epochs;
    LossBreakdown acc;
    int counted = 0;
    for (int b = step_in_epoch; b < nb; ++b) {
      if (opt.max_steps >= 0 && steps_here >= opt.max_steps) {
        save(epoch, b);
        result.stopped_early = true;
        result.teacher_hash_after = teacher.parameter_hash();
        return result;
      }
      std::vector<StereoSample> batch;
      std::vector<FeaturePyramid> feats;
      for (std::size_t k = static_cast<std::size_t>(b) * cfg.batch_size;
           k < std::min(data.size(), static_cast<std::size_t>(b + 1) * cfg.batch_size); ++k) {
        batch.push_back(prepared_sample(data[order[k]], teacher, cfg, epoch));
        if (cfg.ts_enabled()) feats.push_back(teacher.teacher_features(batch.back(), shapes));
      }
      LossBreakdown mean;
      std::vector<Tensor> grads = batch_gradients(net, batch, feats, cfg, masks_active, mean);
      const double gn = clip_global_norm(grads, cfg.grad_clip);
      adam_step(net.parameters().values(), grads, adam, lr, ap);
      ++global_step;
      ++steps_here;
      acc += mean;
      ++counted;
      if (opt.on_step) opt.on_step(StepRecord{global_step, epoch, lr, mean, gn});
      if (opt.log) {
        *opt.log << "step=" << global_step << " epoch=" << epoch << " lr=" << lr << " L_total=" << mean.total
                 << " L_depth=" << mean.depth << " L_mask=" << mean.mask << " L_TS=" << mean.ts << " grad_norm=" << gn
                 << "\n";
      }
    }
    if (teacher.parameter_hash() != result.teacher_hash_before) {
      throw std::runtime_error("train: frozen teacher changed during epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, lr, acc.scaled(counted > 0 ? 1.0 / counted : 0.0)};
    result.epochs.push_back(rec);
    if (csv.is_open()) csv << format_metrics_row(rec) << std::endl;
    if (opt.log) {
      *opt.log << "epoch=" << epoch << " lr=" << lr << " L_total=" << rec.mean.total << " L_depth=" << rec.mean.depth
               << " L_mask=" << rec.mean.mask << " L_TS=" << rec.mean.ts << "\n";
    }
    save(epoch + 1, 0);
  }
  if (result.final.names.empty()) save(epoch, 0);
  result.teacher_hash_after = teacher.parameter_hash();
  return result;
}

}  // namespace seldist
