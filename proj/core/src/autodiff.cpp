#include "ovpseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <unordered_set>
#include <utility>

#include "ovpseg/errors.hpp"

namespace ovpseg {
namespace {

// Wires value + parents into a node. When no parent carries gradient the
// parents and closure are dropped so constant subgraphs fold away.
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  for (const Var& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (Var& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Var(n);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch");
  }
}

void require_2d(const Tensor& a, const char* op) {
  if (a.ndim() != 2) throw DimensionError(std::string(op) + ": need 2-D input");
}

void require_1d(const Tensor& a, const char* op) {
  if (a.ndim() != 1) throw DimensionError(std::string(op) + ": need 1-D input");
}

// Accumulate g into parent slot i of self, skipping constant parents.
Tensor* grad_slot(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.grad;
}

void softmax_into(const double* x, double* y, std::size_t n, std::size_t stride) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i * stride] = std::exp(x[i * stride] - mx);
    z += y[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) y[i * stride] /= z;
}

// Probability clamp for logs inside the focal loss.
constexpr double kEps = 1e-12;

// dx_i = y_i * (g_i - sum_j g_j y_j)
void softmax_grad_into(const double* y, const double* g, double* dx,
                       std::size_t n, std::size_t stride) {
  double dyy = 0.0;
  for (std::size_t i = 0; i < n; ++i) dyy += g[i * stride] * y[i * stride];
  for (std::size_t i = 0; i < n; ++i) {
    dx[i * stride] += y[i * stride] * (g[i * stride] - dyy);
  }
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(n);
}

void backward(const Var& root) {
  if (!root.defined()) throw ContractError("backward: undefined root");
  if (root.value().size() != 1) {
    throw ContractError("backward: root must be a scalar");
  }
  if (!root.requires_grad()) {
    throw ContractError("backward: root does not depend on any leaf");
  }

  // Iterative post-order over grad-requiring nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad = Tensor::zeros(n->value.shape());
  root.node()->grad.values()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += bv[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (Tensor* g = grad_slot(self, s)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          g->values()[i] += self.grad.data()[i];
        }
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] -= bv[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i];
      }
    }
    if (Tensor* g = grad_slot(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] -= self.grad.data()[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= bv[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i] * bv[i];
      }
    }
    if (Tensor* g = grad_slot(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i] * av[i];
      }
    }
  });
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= k;
  return make_op(std::move(out), {a}, [k](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i] * k;
      }
    }
  });
}

Var add_scalar(const Var& a, double k) {
  Tensor out = a.value();
  for (double& v : out.values()) v += k;
  return make_op(std::move(out), {a}, [](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i];
      }
    }
  });
}

Var add_rowvec(const Var& a, const Var& b) {
  require_2d(a.value(), "add_rowvec");
  require_1d(b.value(), "add_rowvec");
  const int rows = a.value().rows(), cols = a.value().cols();
  if (b.value().dim(0) != cols) {
    throw DimensionError("add_rowvec: row vector length != column count");
  }
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out.values()[r * cols + c] += bv[c];
  }
  return make_op(std::move(out), {a, b}, [rows, cols](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i];
      }
    }
    if (Tensor* g = grad_slot(self, 1)) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          g->values()[c] += self.grad.data()[r * cols + c];
        }
      }
    }
  });
}

Var mul_scalar_var(const Var& a, const Var& s) {
  if (s.value().size() != 1) {
    throw DimensionError("mul_scalar_var: scale must be a scalar");
  }
  const double sv = s.value().data()[0];
  Tensor out = a.value();
  for (double& v : out.values()) v *= sv;
  return make_op(std::move(out), {a, s}, [sv](Node& self) {
    const double* av = self.parents[0]->value.data();
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i] * sv;
      }
    }
    if (Tensor* g = grad_slot(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        acc += self.grad.data()[i] * av[i];
      }
      g->values()[0] += acc;
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require_2d(a.value(), "concat_cols");
  require_2d(b.value(), "concat_cols");
  const int rows = a.value().rows();
  if (b.value().rows() != rows) {
    throw DimensionError("concat_cols: row count mismatch");
  }
  const int ca = a.value().cols(), cb = b.value().cols();
  Tensor out = Tensor::zeros({rows, ca + cb});
  for (int r = 0; r < rows; ++r) {
    const double* ar = a.value().data() + std::size_t(r) * ca;
    const double* br = b.value().data() + std::size_t(r) * cb;
    double* o = out.values().data() + std::size_t(r) * (ca + cb);
    std::copy(ar, ar + ca, o);
    std::copy(br, br + cb, o + ca);
  }
  return make_op(std::move(out), {a, b}, [rows, ca, cb](Node& self) {
    Tensor* ga = grad_slot(self, 0);
    Tensor* gb = grad_slot(self, 1);
    for (int r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + std::size_t(r) * (ca + cb);
      if (ga) {
        double* o = ga->values().data() + std::size_t(r) * ca;
        for (int c = 0; c < ca; ++c) o[c] += g[c];
      }
      if (gb) {
        double* o = gb->values().data() + std::size_t(r) * cb;
        for (int c = 0; c < cb; ++c) o[c] += g[ca + c];
      }
    }
  });
}

Var concat_rows(const Var& a, const Var& b) {
  require_2d(a.value(), "concat_rows");
  require_2d(b.value(), "concat_rows");
  const int cols = a.value().cols();
  if (b.value().cols() != cols) {
    throw DimensionError("concat_rows: column count mismatch");
  }
  const int ra = a.value().rows(), rb = b.value().rows();
  Tensor out = Tensor::zeros({ra + rb, cols});
  std::copy(a.value().data(), a.value().data() + a.value().size(),
            out.values().data());
  std::copy(b.value().data(), b.value().data() + b.value().size(),
            out.values().data() + a.value().size());
  return make_op(std::move(out), {a, b}, [ra, rb, cols](Node& self) {
    Tensor* ga = grad_slot(self, 0);
    Tensor* gb = grad_slot(self, 1);
    const std::size_t na = std::size_t(ra) * cols;
    const std::size_t nb = std::size_t(rb) * cols;
    if (ga) {
      for (std::size_t i = 0; i < na; ++i)
        ga->values()[i] += self.grad[i];
    }
    if (gb) {
      for (std::size_t i = 0; i < nb; ++i)
        gb->values()[i] += self.grad[na + i];
    }
  });
}

Var exp_elem(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    if (Tensor* ga = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        ga->values()[i] += self.grad[i] * self.value[i];
      }
    }
  });
}

Var transpose(const Var& a) {
  require_2d(a.value(), "transpose");
  const int rows = a.value().rows(), cols = a.value().cols();
  Tensor out = Tensor::zeros({cols, rows});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out.values()[std::size_t(c) * rows + r] = a.value().at(r, c);
    }
  }
  return make_op(std::move(out), {a}, [rows, cols](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          g->values()[std::size_t(r) * cols + c] +=
              self.grad.data()[std::size_t(c) * rows + r];
        }
      }
    }
  });
}

Var gather_row(const Var& a, int row) {
  require_2d(a.value(), "gather_row");
  const int rows = a.value().rows(), cols = a.value().cols();
  if (row < 0 || row >= rows) throw DimensionError("gather_row: row out of range");
  Tensor out = Tensor::zeros({cols});
  const double* src = a.value().data() + std::size_t(row) * cols;
  std::copy(src, src + cols, out.values().data());
  return make_op(std::move(out), {a}, [row, cols](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      double* dst = g->values().data() + std::size_t(row) * cols;
      for (int c = 0; c < cols; ++c) dst[c] += self.grad.data()[c];
    }
  });
}

Var clip(const Var& a, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("clip: lo must be < hi");
  Tensor out = a.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return make_op(std::move(out), {a}, [lo, hi](Node& self) {
    const double* av = self.parents[0]->value.data();
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (av[i] >= lo && av[i] <= hi) g->values()[i] += self.grad.data()[i];
      }
    }
  });
}

Var abs(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::fabs(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    const double* av = self.parents[0]->value.data();
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double s = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
        g->values()[i] += self.grad.data()[i] * s;
      }
    }
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = sigmoid_scalar(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    const double* y = self.value.data();
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i] * y[i] * (1.0 - y[i]);
      }
    }
  });
}

Var tanh_act(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    const double* y = self.value.data();
    if (Tensor* g = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g->values()[i] += self.grad.data()[i] * (1.0 - y[i] * y[i]);
      }
    }
  });
}

Var softmax(const Var& a) {
  require_1d(a.value(), "softmax");
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("softmax: empty input");
  Tensor out = Tensor::zeros(a.value().shape());
  softmax_into(a.value().data(), out.values().data(), n, 1);
  return make_op(std::move(out), {a}, [n](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      softmax_grad_into(self.value.data(), self.grad.data(),
                        g->values().data(), n, 1);
    }
  });
}

Var softmax_rows(const Var& a) {
  require_2d(a.value(), "softmax_rows");
  const int rows = a.value().rows(), cols = a.value().cols();
  if (cols == 0) throw DimensionError("softmax_rows: empty rows");
  Tensor out = Tensor::zeros(a.value().shape());
  for (int r = 0; r < rows; ++r) {
    softmax_into(a.value().data() + std::size_t(r) * cols,
                 out.values().data() + std::size_t(r) * cols, cols, 1);
  }
  return make_op(std::move(out), {a}, [rows, cols](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (int r = 0; r < rows; ++r) {
        softmax_grad_into(self.value.data() + std::size_t(r) * cols,
                          self.grad.data() + std::size_t(r) * cols,
                          g->values().data() + std::size_t(r) * cols, cols, 1);
      }
    }
  });
}

Var softmax_cols(const Var& a) {
  require_2d(a.value(), "softmax_cols");
  const int rows = a.value().rows(), cols = a.value().cols();
  if (rows == 0) throw DimensionError("softmax_cols: empty columns");
  Tensor out = Tensor::zeros(a.value().shape());
  for (int c = 0; c < cols; ++c) {
    softmax_into(a.value().data() + c, out.values().data() + c,
                 std::size_t(rows), std::size_t(cols));
  }
  return make_op(std::move(out), {a}, [rows, cols](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (int c = 0; c < cols; ++c) {
        softmax_grad_into(self.value.data() + c, self.grad.data() + c,
                          g->values().data() + c, std::size_t(rows),
                          std::size_t(cols));
      }
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul_plain(a.value(), b.value());
  const int m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    const double* g = self.grad.data();
    if (Tensor* ga = grad_slot(self, 0)) {
      // dA = dC * B^T
      double* o = ga->values().data();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          const double gij = g[std::size_t(i) * n + j];
          if (gij == 0.0) continue;
          const double* brow = bv;  // column j of B traversed row-wise
          for (int p = 0; p < k; ++p) {
            o[std::size_t(i) * k + p] += gij * brow[std::size_t(p) * n + j];
          }
        }
      }
    }
    if (Tensor* gb = grad_slot(self, 1)) {
      // dB = A^T * dC
      double* o = gb->values().data();
      for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
          const double aip = av[std::size_t(i) * k + p];
          if (aip == 0.0) continue;
          for (int j = 0; j < n; ++j) {
            o[std::size_t(p) * n + j] += aip * g[std::size_t(i) * n + j];
          }
        }
      }
    }
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return make_op(Tensor::scalar(acc), {a}, [](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      const double s = self.grad.data()[0];
      for (double& v : g->values()) v += s;
    }
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean: empty input");
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return make_op(Tensor::scalar(acc / double(n)), {a}, [n](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      const double s = self.grad.data()[0] / double(n);
      for (double& v : g->values()) v += s;
    }
  });
}

Var cosine(const Var& a, const Var& b) {
  require_1d(a.value(), "cosine");
  require_1d(b.value(), "cosine");
  require_same_shape(a.value(), b.value(), "cosine");
  const double na = norm_plain(a.value());
  const double nb = norm_plain(b.value());
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateVectorError("cosine: zero-norm input");
  }
  const double d = dot_plain(a.value(), b.value());
  const double c = d / (na * nb);
  return make_op(Tensor::scalar(c), {a, b}, [na, nb, c](Node& self) {
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    const double g = self.grad.data()[0];
    const std::size_t n = self.parents[0]->value.size();
    if (Tensor* ga = grad_slot(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        ga->values()[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
      }
    }
    if (Tensor* gb = grad_slot(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        gb->values()[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
      }
    }
  });
}

Var cosine_rows(const Var& a, const Var& b) {
  require_2d(a.value(), "cosine_rows");
  require_2d(b.value(), "cosine_rows");
  const int q = a.value().rows(), d = a.value().cols(), l = b.value().rows();
  if (b.value().cols() != d) {
    throw DimensionError("cosine_rows: feature width mismatch");
  }
  std::vector<double> na(q), nb(l);
  for (int i = 0; i < q; ++i) {
    double acc = 0.0;
    const double* row = a.value().data() + std::size_t(i) * d;
    for (int j = 0; j < d; ++j) acc += row[j] * row[j];
    na[i] = std::sqrt(acc);
    if (na[i] == 0.0) throw DegenerateVectorError("cosine_rows: zero-norm row");
  }
  for (int i = 0; i < l; ++i) {
    double acc = 0.0;
    const double* row = b.value().data() + std::size_t(i) * d;
    for (int j = 0; j < d; ++j) acc += row[j] * row[j];
    nb[i] = std::sqrt(acc);
    if (nb[i] == 0.0) throw DegenerateVectorError("cosine_rows: zero-norm row");
  }
  Tensor out = Tensor::zeros({q, l});
  for (int i = 0; i < q; ++i) {
    const double* ar = a.value().data() + std::size_t(i) * d;
    for (int j = 0; j < l; ++j) {
      const double* br = b.value().data() + std::size_t(j) * d;
      double acc = 0.0;
      for (int p = 0; p < d; ++p) acc += ar[p] * br[p];
      out.values()[std::size_t(i) * l + j] = acc / (na[i] * nb[j]);
    }
  }
  return make_op(std::move(out), {a, b},
                 [q, d, l, na, nb](Node& self) {
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    const double* cv = self.value.data();
    const double* g = self.grad.data();
    Tensor* ga = grad_slot(self, 0);
    Tensor* gb = grad_slot(self, 1);
    for (int i = 0; i < q; ++i) {
      const double* ar = av + std::size_t(i) * d;
      for (int j = 0; j < l; ++j) {
        const double gij = g[std::size_t(i) * l + j];
        if (gij == 0.0) continue;
        const double* br = bv + std::size_t(j) * d;
        const double c = cv[std::size_t(i) * l + j];
        if (ga) {
          double* o = ga->values().data() + std::size_t(i) * d;
          for (int p = 0; p < d; ++p) {
            o[p] += gij * (br[p] / (na[i] * nb[j]) - c * ar[p] / (na[i] * na[i]));
          }
        }
        if (gb) {
          double* o = gb->values().data() + std::size_t(j) * d;
          for (int p = 0; p < d; ++p) {
            o[p] += gij * (ar[p] / (na[i] * nb[j]) - c * br[p] / (nb[j] * nb[j]));
          }
        }
      }
    }
  });
}

Var l1_mean(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "l1_mean");
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("l1_mean: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::fabs(a.value().data()[i] - b.value().data()[i]);
  }
  return make_op(Tensor::scalar(acc / double(n)), {a, b}, [n](Node& self) {
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    const double g = self.grad.data()[0] / double(n);
    Tensor* ga = grad_slot(self, 0);
    Tensor* gb = grad_slot(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = av[i] - bv[i];
      const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      if (ga) ga->values()[i] += g * s;
      if (gb) gb->values()[i] -= g * s;
    }
  });
}

Var focal_loss(const Var& probs, std::optional<int> target, double gamma,
               double alpha) {
  require_1d(probs.value(), "focal_loss");
  const int c = int(probs.value().size());
  if (c == 0) throw DimensionError("focal_loss: empty probability vector");
  if (target && (*target < 0 || *target >= c)) {
    throw DimensionError("focal_loss: target class out of range");
  }
  const int tgt = target ? *target : -1;
  double acc = 0.0;
  for (int i = 0; i < c; ++i) {
    const double p = probs.value().data()[i];
    if (i == tgt) {
      // Raw p in the modulating power keeps the perfect-prediction value
      // exactly zero; the clamp only guards the log.
      acc += -alpha * std::pow(1.0 - p, gamma) * std::log(std::max(p, kEps));
    } else {
      acc += -(1.0 - alpha) * std::pow(p, gamma) *
             std::log1p(-std::min(p, 1.0 - kEps));
    }
  }
  return make_op(Tensor::scalar(acc), {probs},
                 [c, tgt, gamma, alpha](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      const double gs = self.grad.data()[0];
      const double* pv = self.parents[0]->value.data();
      for (int i = 0; i < c; ++i) {
        const double p = pv[i];
        double d;
        if (i == tgt) {
          const double pc = std::max(p, kEps);
          d = alpha * gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(pc) -
              alpha * std::pow(1.0 - p, gamma) / pc;
        } else {
          const double qc = std::max(1.0 - p, kEps);
          d = -(1.0 - alpha) * gamma * std::pow(p, gamma - 1.0) *
                  std::log1p(-std::min(p, 1.0 - kEps)) +
              (1.0 - alpha) * std::pow(p, gamma) / qc;
        }
        g->values()[i] += gs * d;
      }
    }
  });
}

Var bce_logits_mean(const Var& logits, const Tensor& targets) {
  require_same_shape(logits.value(), targets, "bce_logits_mean");
  const std::size_t n = logits.value().size();
  if (n == 0) throw DimensionError("bce_logits_mean: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.value().data()[i];
    const double t = targets.data()[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
  }
  return make_op(Tensor::scalar(acc / double(n)), {logits},
                 [n, targets](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      const double gs = self.grad.data()[0] / double(n);
      const double* zv = self.parents[0]->value.data();
      for (std::size_t i = 0; i < n; ++i) {
        g->values()[i] += gs * (sigmoid_scalar(zv[i]) - targets.data()[i]);
      }
    }
  });
}

Var dice_loss(const Var& probs, const Tensor& targets) {
  require_same_shape(probs.value(), targets, "dice_loss");
  const std::size_t n = probs.value().size();
  double inter = 0.0, psum = 0.0, gsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += probs.value().data()[i] * targets.data()[i];
    psum += probs.value().data()[i];
    gsum += targets.data()[i];
  }
  const double num = 2.0 * inter + 1.0;
  const double den = psum + gsum + 1.0;
  return make_op(Tensor::scalar(1.0 - num / den), {probs},
                 [n, targets, num, den](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      const double gs = self.grad.data()[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double d = -(2.0 * targets.data()[i] * den - num) / (den * den);
        g->values()[i] += gs * d;
      }
    }
  });
}

Var class_max(const Var& scores, const std::vector<int>& label_class,
              int n_classes) {
  const Tensor& s = scores.value();
  const bool one_row = s.ndim() == 1;
  const int rows = one_row ? 1 : s.rows();
  const int labels = one_row ? int(s.size()) : s.cols();
  if (int(label_class.size()) != labels) {
    throw DimensionError("class_max: label map length != score count");
  }
  for (int cls : label_class) {
    if (cls < 0 || cls >= n_classes) {
      throw DimensionError("class_max: label maps to class out of range");
    }
  }
  Tensor out = one_row ? Tensor::zeros({n_classes})
                       : Tensor::zeros({rows, n_classes});
  // argmax[r * n_classes + c]: winning label index, -1 where a class has no
  // labels. Ties break to the lowest label index.
  std::vector<int> argmax(std::size_t(rows) * n_classes, -1);
  for (int r = 0; r < rows; ++r) {
    const double* row = s.data() + std::size_t(r) * labels;
    for (int l = 0; l < labels; ++l) {
      const int c = label_class[l];
      int& win = argmax[std::size_t(r) * n_classes + c];
      if (win < 0 || row[l] > row[win]) win = l;
    }
    for (int c = 0; c < n_classes; ++c) {
      const int win = argmax[std::size_t(r) * n_classes + c];
      if (win < 0) {
        throw DimensionError("class_max: class with no labels");
      }
      out.values()[std::size_t(r) * n_classes + c] = row[win];
    }
  }
  return make_op(std::move(out), {scores},
                 [rows, labels, n_classes, argmax](Node& self) {
    if (Tensor* g = grad_slot(self, 0)) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < n_classes; ++c) {
          const int win = argmax[std::size_t(r) * n_classes + c];
          g->values()[std::size_t(r) * labels + win] +=
              self.grad.data()[std::size_t(r) * n_classes + c];
        }
      }
    }
  });
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw DimensionError("matmul: need 2-D inputs");
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimension mismatch (" +
                         std::to_string(k) + " vs " + std::to_string(b.rows()) +
                         ")");
  }
  Tensor out = Tensor::zeros({m, n});
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.values().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[std::size_t(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + std::size_t(p) * n;
      double* orow = ov + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor softmax_plain(const Tensor& v) {
  if (v.ndim() != 1 || v.size() == 0) {
    throw DimensionError("softmax: need a non-empty 1-D input");
  }
  Tensor out = Tensor::zeros(v.shape());
  softmax_into(v.data(), out.values().data(), v.size(), 1);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dot_plain(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

double norm_plain(const Tensor& a) { return std::sqrt(dot_plain(a, a)); }

double cosine_plain(const Tensor& a, const Tensor& b) {
  const double na = norm_plain(a), nb = norm_plain(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateVectorError("cosine: zero-norm input");
  }
  return dot_plain(a, b) / (na * nb);
}

}  // namespace ovpseg
