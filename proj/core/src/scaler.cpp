#include "specrage/error.hpp"
#include "specrage/mvdata.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace specrage {

FeatureScaler FeatureScaler::fit(const MultiViewDataset& ds) {
  if (ds.size() < 1) throw ParameterError("FeatureScaler::fit: empty dataset");
  FeatureScaler s;
  for (const auto& x : ds.views) {
    const RowVector mu = x.colwise().mean();
    RowVector sd = ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
    for (Index j = 0; j < sd.size(); ++j)
      if (!(sd(j) > 1e-12)) sd(j) = 1.0;
    s.mean.push_back(mu);
    s.scale.push_back(sd);
  }
  return s;
}

FeatureScaler FeatureScaler::identity(std::span<const Index> view_dims) {
  FeatureScaler s;
  for (Index d : view_dims) {
    s.mean.push_back(RowVector::Zero(d));
    s.scale.push_back(RowVector::Ones(d));
  }
  return s;
}

std::vector<Matrix> FeatureScaler::apply(const std::vector<Matrix>& views) const {
  if (views.size() != mean.size())
    throw InputError("FeatureScaler: expected " + std::to_string(mean.size()) + " views, got " +
                     std::to_string(views.size()));
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].cols() != mean[v].size())
      throw InputError("FeatureScaler: view " + std::to_string(v) + " has " + std::to_string(views[v].cols()) +
                       " features, expected " + std::to_string(mean[v].size()));
    out.push_back(((views[v].rowwise() - mean[v]).array().rowwise() / scale[v].array()).matrix());
  }
  return out;
}

MultiViewDataset FeatureScaler::apply(const MultiViewDataset& ds) const {
  MultiViewDataset out = ds;
  out.views = apply(ds.views);
  return out;
}

std::string FeatureScaler::serialize() const {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "specrage-scaler 1\nviews " << mean.size() << "\n";
  for (std::size_t v = 0; v < mean.size(); ++v) {
    out << "view " << v << " " << mean[v].size() << "\nmean";
    for (Index j = 0; j < mean[v].size(); ++j) out << " " << mean[v](j);
    out << "\nscale";
    for (Index j = 0; j < scale[v].size(); ++j) out << " " << scale[v](j);
    out << "\n";
  }
  out << "end specrage-scaler\n";
  return out.str();
}

FeatureScaler FeatureScaler::parse(const std::string& text) {
  std::istringstream in(text);
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw FormatError("scaler: expected '" + word + "', got '" + got + "'");
  };
  auto number = [&]() {
    double x = 0.0;
    if (!(in >> x) || !std::isfinite(x)) throw FormatError("scaler: bad number");
    return x;
  };
  expect("specrage-scaler");
  expect("1");
  expect("views");
  long long nv = 0;
  if (!(in >> nv) || nv < 0) throw FormatError("scaler: bad view count");
  FeatureScaler s;
  for (long long v = 0; v < nv; ++v) {
    expect("view");
    long long idx = -1, d = -1;
    if (!(in >> idx >> d) || idx != v || d < 1) throw FormatError("scaler: bad view header");
    RowVector mu(d), sd(d);
    expect("mean");
    for (Index j = 0; j < d; ++j) mu(j) = number();
    expect("scale");
    for (Index j = 0; j < d; ++j) {
      sd(j) = number();
      if (!(sd(j) > 0.0)) throw FormatError("scaler: scale entries must be positive");
    }
    s.mean.push_back(mu);
    s.scale.push_back(sd);
  }
  expect("end");
  expect("specrage-scaler");
  return s;
}

void FeatureScaler::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << serialize();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

FeatureScaler FeatureScaler::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace specrage
