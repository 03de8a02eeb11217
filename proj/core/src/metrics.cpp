#include "magkit/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace magkit {
namespace {

// Kahan-compensated mean so aggregation order cannot perturb reports.
class CompensatedMean {
 public:
  void add(double v) {
    double y = v - comp_;
    double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
    ++n_;
  }
  double value() const { return n_ ? sum_ / (double)n_ : 0.0; }
  int64_t count() const { return n_; }

 private:
  double sum_ = 0, comp_ = 0;
  int64_t n_ = 0;
};

torch::Tensor gaussian_window(int64_t size, double sigma, torch::Dtype dtype) {
  auto coords = torch::arange(size, dtype) - (double)(size - 1) / 2;
  auto g = torch::exp(-coords.pow(2) / (2 * sigma * sigma));
  g = g / g.sum();
  return g.outer(g);
}

double ssim_global(const torch::Tensor& a, const torch::Tensor& b, double c1, double c2) {
  // per channel over the leading dim when 3-D, else one global pass
  auto chans_a = a.dim() == 3 ? a : a.unsqueeze(0);
  auto chans_b = b.dim() == 3 ? b : b.unsqueeze(0);
  CompensatedMean mean;
  for (int64_t c = 0; c < chans_a.size(0); ++c) {
    auto x = chans_a[c].to(torch::kFloat64).flatten();
    auto y = chans_b[c].to(torch::kFloat64).flatten();
    double mx = x.mean().item<double>(), my = y.mean().item<double>();
    double vx = (x - mx).pow(2).mean().item<double>();
    double vy = (y - my).pow(2).mean().item<double>();
    double cov = ((x - mx) * (y - my)).mean().item<double>();
    double v = (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    mean.add(v);
  }
  return mean.value();
}

double ssim_windowed(const torch::Tensor& a, const torch::Tensor& b, double c1, double c2) {
  auto x = (a.dim() == 3 ? a : a.unsqueeze(0)).to(torch::kFloat64).unsqueeze(1);
  auto y = (b.dim() == 3 ? b : b.unsqueeze(0)).to(torch::kFloat64).unsqueeze(1);
  auto win = gaussian_window(11, 1.5, torch::kFloat64).reshape({1, 1, 11, 11});
  auto mu_x = torch::conv2d(x, win);
  auto mu_y = torch::conv2d(y, win);
  auto xx = torch::conv2d(x * x, win) - mu_x * mu_x;
  auto yy = torch::conv2d(y * y, win) - mu_y * mu_y;
  auto xy = torch::conv2d(x * y, win) - mu_x * mu_y;
  auto map = (2 * mu_x * mu_y + c1) * (2 * xy + c2) /
             ((mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2));
  return map.mean().item<double>();
}

}  // namespace

double psnr(const torch::Tensor& i, const torch::Tensor& r, double max_value) {
  TORCH_CHECK(i.sizes() == r.sizes(), "psnr shape mismatch");
  TORCH_CHECK(max_value > 0, "psnr max_value must be positive");
  auto mse = (i.to(torch::kFloat64) - r.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0) return kPsnrSaturationDb;
  return std::min(kPsnrSaturationDb, 10.0 * std::log10(max_value * max_value / mse));
}

double ssim(const torch::Tensor& i, const torch::Tensor& r, double c1, double c2, bool windowed) {
  TORCH_CHECK(i.sizes() == r.sizes(), "ssim shape mismatch");
  return windowed ? ssim_windowed(i, r, c1, c2) : ssim_global(i, r, c1, c2);
}

double ssim_for_range(const torch::Tensor& i, const torch::Tensor& r, double range, bool windowed) {
  return ssim(i, r, (0.01 * range) * (0.01 * range), (0.03 * range) * (0.03 * range), windowed);
}

namespace {

torch::Tensor sqrtm_psd(const torch::Tensor& sym) {
  auto [vals, vecs] = torch::linalg_eigh(sym);
  auto clipped = vals.clamp_min(0).sqrt();
  return vecs.matmul(torch::diag(clipped)).matmul(vecs.transpose(0, 1));
}

}  // namespace

double fid(const torch::Tensor& real_features, const torch::Tensor& fake_features) {
  TORCH_CHECK(real_features.dim() == 2 && fake_features.dim() == 2, "fid expects [N, D] feature sets");
  TORCH_CHECK(real_features.size(1) == fake_features.size(1), "fid feature dims differ");
  TORCH_CHECK(real_features.size(0) >= 2 && fake_features.size(0) >= 2, "fid needs at least 2 samples per side");
  auto a = real_features.to(torch::kFloat64);
  auto b = fake_features.to(torch::kFloat64);
  const auto d = a.size(1);
  auto mu_a = a.mean(0);
  auto mu_b = b.mean(0);
  auto cov = [d](const torch::Tensor& m, const torch::Tensor& mu) {
    auto centered = m - mu;
    auto c = centered.transpose(0, 1).matmul(centered) / (double)(m.size(0) - 1);
    if (m.size(0) < d + 1) c = c + 1e-6 * torch::eye(d, torch::kFloat64);
    return c;
  };
  auto ca = cov(a, mu_a);
  auto cb = cov(b, mu_b);
  // Tr((Σa Σb)^1/2) through the symmetric product S^1/2 Σb S^1/2 with S = Σa
  auto sa = sqrtm_psd(ca);
  auto inner = sa.matmul(cb).matmul(sa);
  auto cross = sqrtm_psd((inner + inner.transpose(0, 1)) / 2);
  double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
  double trace_term = (ca.trace() + cb.trace() - 2 * cross.trace()).item<double>();
  return std::max(0.0, mean_term + trace_term);
}

AccuracyResult editing_accuracy(const BatchEditFn& edit, const BatchClassifyFn& classify,
                                const std::vector<MreSample>& samples, int64_t batch_size,
                                const std::function<bool(const MreSample&)>& filter) {
  std::vector<const MreSample*> kept;
  for (const auto& s : samples)
    if (!filter || filter(s)) kept.push_back(&s);
  TORCH_CHECK(!kept.empty(), "editing_accuracy needs a non-empty dataset");
  const auto C = kept.front()->att_s.size(0);
  std::vector<CompensatedMean> per_attr(C);
  torch::NoGradGuard ng;
  for (size_t start = 0; start < kept.size(); start += (size_t)batch_size) {
    const auto n = std::min(kept.size() - start, (size_t)batch_size);
    std::vector<torch::Tensor> imgs, atts;
    for (size_t k = 0; k < n; ++k) {
      imgs.push_back(kept[start + k]->image);
      atts.push_back(kept[start + k]->att_s);
    }
    auto x = torch::stack(imgs);
    auto att_s = torch::stack(atts).to(torch::kFloat32);
    for (int64_t i = 0; i < C; ++i) {
      auto diff = torch::zeros({(int64_t)n, C});
      diff.index_put_({torch::indexing::Slice(), i}, 1 - 2 * att_s.index({torch::indexing::Slice(), i}));
      auto edited = edit(x, diff);
      auto logits = classify(edited);
      auto predicted = (logits.index({torch::indexing::Slice(), i}) > 0).to(torch::kFloat32);
      auto target = 1 - att_s.index({torch::indexing::Slice(), i});
      auto hit = (predicted == target).to(torch::kFloat64);
      for (int64_t k = 0; k < (int64_t)n; ++k) per_attr[i].add(hit[k].item<double>());
    }
  }
  AccuracyResult out;
  CompensatedMean avg;
  for (int64_t i = 0; i < C; ++i) {
    out.per_attribute.push_back(per_attr[i].value());
    avg.add(per_attr[i].value());
  }
  out.average = avg.value();
  return out;
}

double mask_area_ratio(const PartMaskStack& parts, const std::string& part_name) {
  TORCH_CHECK(!parts.part_names.empty(), "mask-area predicate needs named parts");
  for (size_t p = 0; p < parts.part_names.size(); ++p)
    if (parts.part_names[p] == part_name) return parts.probs[(int64_t)p].mean().item<double>();
  TORCH_CHECK(false, "no part named '", part_name, "'");
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "subgroup " << subgroup << '\n';
  os << "MRE " << mre << '\n';
  os << "PSNR " << psnr_mean << '\n';
  os << "SSIM " << ssim_mean << '\n';
  os << "Avg_Acc " << avg_accuracy << '\n';
  for (size_t i = 0; i < per_attribute_accuracy.size(); ++i) {
    auto name = i < attribute_names.size() ? attribute_names[i] : "attr" + std::to_string(i);
    os << "Acc_" << name << ' ' << per_attribute_accuracy[i] << '\n';
  }
  if (fid) {
    os << "FID " << *fid << '\n';
    os << "FID_embedder " << (fid_embedder.empty() ? "unspecified" : fid_embedder) << '\n';
  }
  return os.str();
}

EvalReport EvalReport::from_text(const std::string& text) {
  EvalReport r;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "subgroup")
      ls >> r.subgroup;
    else if (key == "MRE")
      ls >> r.mre;
    else if (key == "PSNR")
      ls >> r.psnr_mean;
    else if (key == "SSIM")
      ls >> r.ssim_mean;
    else if (key == "Avg_Acc")
      ls >> r.avg_accuracy;
    else if (key == "FID") {
      double v;
      ls >> v;
      r.fid = v;
    } else if (key == "FID_embedder")
      ls >> r.fid_embedder;
    else if (key.rfind("Acc_", 0) == 0) {
      double v;
      ls >> v;
      r.attribute_names.push_back(key.substr(4));
      r.per_attribute_accuracy.push_back(v);
    }
  }
  return r;
}

void save_eval_report(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream os(path);
  TORCH_CHECK(os.good(), "cannot write eval report: ", path);
  for (size_t i = 0; i < reports.size(); ++i) {
    if (i) os << '\n';
    os << reports[i].to_text();
  }
}

}  // namespace magkit
