#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mvpa/tensor.hpp"

namespace mvpa {

// Reverse-mode tape over whole-tensor ops. Nodes are appended in evaluation
// order, so the tape is already topologically sorted; backward() walks it in
// reverse. All reductions run in a fixed order, which keeps every gradient
// and every forward value bit-reproducible for a given seed.
class Graph {
 public:
  using NodeId = int;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> parents;
    std::function<void(Graph&, NodeId)> backward;
    bool needs_grad = false;
  };

  NodeId leaf(Tensor v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }
  NodeId constant(Tensor v) { return leaf(std::move(v), false); }

  const Tensor& val(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // -------------------------------------------------------------- elementwise

  NodeId add(NodeId a, NodeId b) {
    assert(val(a).same_shape(val(b)));
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += val(b).data[i];
    return make(std::move(out), {a, b}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i];
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i];
      });
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    assert(val(a).same_shape(val(b)));
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= val(b).data[i];
    return make(std::move(out), {a, b}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i];
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= up.data[i];
      });
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    assert(val(a).same_shape(val(b)));
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= val(b).data[i];
    return make(std::move(out), {a, b}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& av = g.val(g.nodes_[id].parents[0]);
      const Tensor& bv = g.val(g.nodes_[id].parents[1]);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i] * bv.data[i];
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i] * av.data[i];
      });
    });
  }

  NodeId scale(NodeId a, double s) {
    Tensor out = val(a);
    for (double& v : out.data) v *= s;
    return make(std::move(out), {a}, [s](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += s * up.data[i];
      });
    });
  }

  // out = a (*) mask with a fixed 0/1 mask; gradients never cross zeros.
  NodeId mul_mask(NodeId a, Tensor mask01) {
    assert(val(a).same_shape(mask01));
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask01.data[i];
    auto m = std::make_shared<Tensor>(std::move(mask01));
    return make(std::move(out), {a}, [m](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i] * m->data[i];
      });
    });
  }

  NodeId silu(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v / (1.0 + std::exp(-v));
    return make(std::move(out), {a}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& x = g.val(g.nodes_[id].parents[0]);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) {
          const double s = 1.0 / (1.0 + std::exp(-x.data[i]));
          t.data[i] += up.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
        }
      });
    });
  }

  NodeId sigmoid(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make(std::move(out), {a}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& y = g.val(id);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i)
          t.data[i] += up.data[i] * y.data[i] * (1.0 - y.data[i]);
      });
    });
  }

  // ---------------------------------------------------------------- shaping

  NodeId add_rowvec(NodeId m, NodeId v) {
    assert(val(m).rank() == 2 && val(v).rank() == 1 && val(m).dim(1) == val(v).dim(0));
    Tensor out = val(m);
    const std::size_t R = out.dim(0), C = out.dim(1);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) out.at(i, j) += val(v).at(j);
    return make(std::move(out), {m, v}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const std::size_t R = up.dim(0), C = up.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i];
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        for (std::size_t j = 0; j < C; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < R; ++i) s += up.at(i, j);
          t.at(j) += s;
        }
      });
    });
  }

  NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
    const Tensor& av = val(a);
    assert(av.rank() == 2 && c0 < c1 && c1 <= av.dim(1));
    const std::size_t R = av.dim(0), W = c1 - c0;
    Tensor out = Tensor::zeros({R, W});
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < W; ++j) out.at(i, j) = av.at(i, c0 + j);
    return make(std::move(out), {a}, [c0, W](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const std::size_t R = up.dim(0);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < R; ++i)
          for (std::size_t j = 0; j < W; ++j) t.at(i, c0 + j) += up.at(i, j);
      });
    });
  }

  NodeId concat_cols(const std::vector<NodeId>& parts) {
    assert(!parts.empty());
    const std::size_t R = val(parts[0]).dim(0);
    std::size_t W = 0;
    for (NodeId p : parts) {
      assert(val(p).rank() == 2 && val(p).dim(0) == R);
      W += val(p).dim(1);
    }
    Tensor out = Tensor::zeros({R, W});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& pv = val(p);
      for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < pv.dim(1); ++j) out.at(i, off + j) = pv.at(i, j);
      off += pv.dim(1);
    }
    return make(std::move(out), parts, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const std::size_t R = up.dim(0);
      std::size_t off = 0;
      for (NodeId p : g.nodes_[id].parents) {
        const std::size_t w = g.val(p).dim(1);
        g.accum(p, [&](Tensor& t) {
          for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < w; ++j) t.at(i, j) += up.at(i, off + j);
        });
        off += w;
      }
    });
  }

  NodeId concat_rows(const std::vector<NodeId>& parts) {
    assert(!parts.empty());
    const std::size_t C = val(parts[0]).dim(1);
    std::size_t R = 0;
    for (NodeId p : parts) {
      assert(val(p).rank() == 2 && val(p).dim(1) == C);
      R += val(p).dim(0);
    }
    Tensor out = Tensor::zeros({R, C});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& pv = val(p);
      for (std::size_t i = 0; i < pv.dim(0); ++i)
        for (std::size_t j = 0; j < C; ++j) out.at(off + i, j) = pv.at(i, j);
      off += pv.dim(0);
    }
    return make(std::move(out), parts, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const std::size_t C = up.dim(1);
      std::size_t off = 0;
      for (NodeId p : g.nodes_[id].parents) {
        const std::size_t r = g.val(p).dim(0);
        g.accum(p, [&](Tensor& t) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < C; ++j) t.at(i, j) += up.at(off + i, j);
        });
        off += r;
      }
    });
  }

  NodeId gather_rows(NodeId a, std::vector<std::size_t> idx) {
    const Tensor& av = val(a);
    assert(av.rank() == 2);
    const std::size_t C = av.dim(1);
    Tensor out = Tensor::zeros({idx.size(), C});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      assert(idx[k] < av.dim(0));
      for (std::size_t j = 0; j < C; ++j) out.at(k, j) = av.at(idx[k], j);
    }
    auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    return make(std::move(out), {a}, [ix](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const std::size_t C = up.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t k = 0; k < ix->size(); ++k)
          for (std::size_t j = 0; j < C; ++j) t.at((*ix)[k], j) += up.at(k, j);
      });
    });
  }

  // out[i][k] = idxmap[i][k] < 0 ? 0 : src[i][idxmap[i][k]]. The map is a
  // fixed routing table, so this differentiates like a scatter of identities.
  NodeId gather2d(NodeId src, std::vector<int> idxmap, std::size_t K) {
    const Tensor& sv = val(src);
    assert(sv.rank() == 2 && idxmap.size() == sv.dim(0) * K);
    const std::size_t R = sv.dim(0);
    Tensor out = Tensor::zeros({R, K});
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        const int j = idxmap[i * K + k];
        if (j >= 0) out.at(i, k) = sv.at(i, static_cast<std::size_t>(j));
      }
    auto ix = std::make_shared<std::vector<int>>(std::move(idxmap));
    return make(std::move(out), {src}, [ix, K](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const std::size_t R = up.dim(0);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < R; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const int j = (*ix)[i * K + k];
            if (j >= 0) t.at(i, static_cast<std::size_t>(j)) += up.at(i, k);
          }
      });
    });
  }

  // ----------------------------------------------------------------- matmul

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    assert(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0));
    const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
    Tensor out = Tensor::zeros({M, N});
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        const double av = A.at(i, k);
        if (av == 0.0) continue;
        const double* brow = B.row(k);
        double* orow = out.row(i);
        for (std::size_t j = 0; j < N; ++j) orow[j] += av * brow[j];
      }
    return make(std::move(out), {a, b}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& A = g.val(g.nodes_[id].parents[0]);
      const Tensor& B = g.val(g.nodes_[id].parents[1]);
      const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        // dA = up * B^T
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t k = 0; k < K; ++k) t.at(i, k) += dot(up.row(i), B.row(k), N);
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        // dB = A^T * up
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t i = 0; i < M; ++i) {
            const double av = A.at(i, k);
            if (av == 0.0) continue;
            const double* urow = up.row(i);
            double* trow = t.row(k);
            for (std::size_t j = 0; j < N; ++j) trow[j] += av * urow[j];
          }
      });
    });
  }

  // out = A * B^T with B given row-major as [n x k]; the natural layout for
  // weight matrices stored [out_dim x in_dim].
  NodeId matmul_nt(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    assert(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1));
    const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(0);
    Tensor out = Tensor::zeros({M, N});
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) out.at(i, j) = dot(A.row(i), B.row(j), K);
    return make(std::move(out), {a, b}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& A = g.val(g.nodes_[id].parents[0]);
      const Tensor& B = g.val(g.nodes_[id].parents[1]);
      const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(0);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        // dA = up * B
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t j = 0; j < N; ++j) {
            const double uv = up.at(i, j);
            if (uv == 0.0) continue;
            const double* brow = B.row(j);
            double* trow = t.row(i);
            for (std::size_t k = 0; k < K; ++k) trow[k] += uv * brow[k];
          }
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        // dB = up^T * A
        for (std::size_t j = 0; j < N; ++j)
          for (std::size_t i = 0; i < M; ++i) {
            const double uv = up.at(i, j);
            if (uv == 0.0) continue;
            const double* arow = A.row(i);
            double* trow = t.row(j);
            for (std::size_t k = 0; k < K; ++k) trow[k] += uv * arow[k];
          }
      });
    });
  }

  // --------------------------------------------------------------- row-wise

  NodeId rmsnorm_rows(NodeId x, NodeId gain, double eps) {
    const Tensor& X = val(x);
    const Tensor& G = val(gain);
    assert(X.rank() == 2 && G.rank() == 1 && X.dim(1) == G.dim(0));
    const std::size_t R = X.dim(0), C = X.dim(1);
    Tensor out = Tensor::zeros({R, C});
    for (std::size_t i = 0; i < R; ++i) {
      double ms = 0.0;
      for (std::size_t j = 0; j < C; ++j) ms += X.at(i, j) * X.at(i, j);
      const double inv = 1.0 / std::sqrt(ms / static_cast<double>(C) + eps);
      for (std::size_t j = 0; j < C; ++j) out.at(i, j) = G.at(j) * X.at(i, j) * inv;
    }
    return make(std::move(out), {x, gain}, [eps](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& X = g.val(g.nodes_[id].parents[0]);
      const Tensor& G = g.val(g.nodes_[id].parents[1]);
      const std::size_t R = X.dim(0), C = X.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < R; ++i) {
          double ms = 0.0, proj = 0.0;
          for (std::size_t j = 0; j < C; ++j) ms += X.at(i, j) * X.at(i, j);
          const double inv = 1.0 / std::sqrt(ms / static_cast<double>(C) + eps);
          for (std::size_t j = 0; j < C; ++j) proj += up.at(i, j) * G.at(j) * X.at(i, j);
          const double k = proj * inv * inv * inv / static_cast<double>(C);
          for (std::size_t j = 0; j < C; ++j)
            t.at(i, j) += inv * G.at(j) * up.at(i, j) - k * X.at(i, j);
        }
      });
      g.accum(g.nodes_[id].parents[1], [&](Tensor& t) {
        for (std::size_t j = 0; j < C; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < R; ++i) {
            double ms = 0.0;
            for (std::size_t jj = 0; jj < C; ++jj) ms += X.at(i, jj) * X.at(i, jj);
            const double inv = 1.0 / std::sqrt(ms / static_cast<double>(C) + eps);
            s += up.at(i, j) * X.at(i, j) * inv;
          }
          t.at(j) += s;
        }
      });
    });
  }

  // Softmax over the unmasked entries of each row; fully masked rows come out
  // all-zero. Masked inputs are never read, so their values cannot leak.
  NodeId masked_softmax_rows(NodeId x, Tensor mask01) {
    const Tensor& X = val(x);
    assert(X.same_shape(mask01));
    const std::size_t R = X.dim(0), C = X.dim(1);
    Tensor out = Tensor::zeros({R, C});
    for (std::size_t i = 0; i < R; ++i) {
      double mx = -1e308;
      bool any = false;
      for (std::size_t j = 0; j < C; ++j)
        if (mask01.at(i, j) != 0.0 && (!any || X.at(i, j) > mx)) {
          mx = X.at(i, j);
          any = true;
        }
      if (!any) continue;
      double z = 0.0;
      for (std::size_t j = 0; j < C; ++j)
        if (mask01.at(i, j) != 0.0) {
          out.at(i, j) = std::exp(X.at(i, j) - mx);
          z += out.at(i, j);
        }
      for (std::size_t j = 0; j < C; ++j) out.at(i, j) /= z;
    }
    auto m = std::make_shared<Tensor>(std::move(mask01));
    return make(std::move(out), {x}, [m](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& P = g.val(id);
      const std::size_t R = P.dim(0), C = P.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < R; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < C; ++j) s += up.at(i, j) * P.at(i, j);
          for (std::size_t j = 0; j < C; ++j)
            if (m->at(i, j) != 0.0) t.at(i, j) += P.at(i, j) * (up.at(i, j) - s);
        }
      });
    });
  }

  NodeId sum_all(NodeId a) {
    double s = 0.0;
    for (double v : val(a).data) s += v;
    Tensor out = Tensor::zeros({1});
    out.at(0) = s;
    return make(std::move(out), {a}, [](Graph& g, NodeId id) {
      const double u = g.nodes_[id].grad.at(0);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (double& v : t.data) v += u;
      });
    });
  }

  NodeId mean_all(NodeId a) { return scale(sum_all(a), 1.0 / static_cast<double>(val(a).numel())); }

  NodeId reshape(NodeId a, std::vector<std::size_t> shape) {
    assert(Tensor::count(shape) == val(a).numel());
    Tensor out = val(a);
    out.shape = shape;
    return make(std::move(out), {a}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += up.data[i];
      });
    });
  }

  // Row-wise cosine similarity of two [M x d] nodes -> [M]. A zero row on
  // either side yields similarity 0 with zero gradient.
  NodeId rows_cosine(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    assert(A.same_shape(B) && A.rank() == 2);
    const std::size_t M = A.dim(0), d = A.dim(1);
    Tensor out = Tensor::zeros({M});
    for (std::size_t i = 0; i < M; ++i) {
      const double na = std::sqrt(dot(A.row(i), A.row(i), d));
      const double nb = std::sqrt(dot(B.row(i), B.row(i), d));
      if (na == 0.0 || nb == 0.0) continue;
      out.at(i) = dot(A.row(i), B.row(i), d) / (na * nb);
    }
    return make(std::move(out), {a, b}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& A = g.val(g.nodes_[id].parents[0]);
      const Tensor& B = g.val(g.nodes_[id].parents[1]);
      const std::size_t M = A.dim(0), d = A.dim(1);
      auto push = [&](NodeId dst, const Tensor& X, const Tensor& Y) {
        // d cos(x,y)/dx = y/(|x||y|) - cos * x/|x|^2, rowwise
        g.accum(dst, [&](Tensor& t) {
          for (std::size_t i = 0; i < M; ++i) {
            const double u = up.at(i);
            if (u == 0.0) continue;
            const double nx = std::sqrt(dot(X.row(i), X.row(i), d));
            const double ny = std::sqrt(dot(Y.row(i), Y.row(i), d));
            if (nx == 0.0 || ny == 0.0) continue;
            const double cosv = dot(X.row(i), Y.row(i), d) / (nx * ny);
            for (std::size_t j = 0; j < d; ++j)
              t.at(i, j) += u * (Y.at(i, j) / (nx * ny) - cosv * X.at(i, j) / (nx * nx));
          }
        });
      };
      push(g.nodes_[id].parents[0], A, B);
      push(g.nodes_[id].parents[1], B, A);
    });
  }

  // Cosine of each row of a [M x d] against its own fixed set of K vectors
  // ([M x K x d]) -> [M x K]. The sets carry no gradient by construction.
  NodeId rows_cosine_sets(NodeId a, Tensor sets) {
    const Tensor& A = val(a);
    assert(A.rank() == 2 && sets.rank() == 3 && sets.dim(0) == A.dim(0) &&
           sets.dim(2) == A.dim(1));
    const std::size_t M = A.dim(0), K = sets.dim(1), d = A.dim(1);
    Tensor out = Tensor::zeros({M, K});
    for (std::size_t i = 0; i < M; ++i) {
      const double na = std::sqrt(dot(A.row(i), A.row(i), d));
      if (na == 0.0) continue;
      for (std::size_t k = 0; k < K; ++k) {
        const double* z = &sets.data[(i * K + k) * d];
        const double nz = std::sqrt(dot(z, z, d));
        if (nz == 0.0) continue;
        out.at(i, k) = dot(A.row(i), z, d) / (na * nz);
      }
    }
    auto zs = std::make_shared<Tensor>(std::move(sets));
    return make(std::move(out), {a}, [zs](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& A = g.val(g.nodes_[id].parents[0]);
      const Tensor& cosv = g.val(id);
      const std::size_t M = A.dim(0), K = up.dim(1), d = A.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < M; ++i) {
          const double na = std::sqrt(dot(A.row(i), A.row(i), d));
          if (na == 0.0) continue;
          for (std::size_t k = 0; k < K; ++k) {
            const double u = up.at(i, k);
            if (u == 0.0) continue;
            const double* z = &zs->data[(i * K + k) * d];
            const double nz = std::sqrt(dot(z, z, d));
            if (nz == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j)
              t.at(i, j) += u * (z[j] / (na * nz) - cosv.at(i, k) * A.at(i, j) / (na * na));
          }
        }
      });
    });
  }

  NodeId logsumexp_rows(NodeId x) {
    const Tensor& X = val(x);
    assert(X.rank() == 2);
    const std::size_t R = X.dim(0), C = X.dim(1);
    Tensor out = Tensor::zeros({R});
    for (std::size_t i = 0; i < R; ++i) {
      double mx = X.at(i, 0);
      for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, X.at(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < C; ++j) z += std::exp(X.at(i, j) - mx);
      out.at(i) = mx + std::log(z);
    }
    return make(std::move(out), {x}, [](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& X = g.val(g.nodes_[id].parents[0]);
      const Tensor& L = g.val(id);
      const std::size_t R = X.dim(0), C = X.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < R; ++i)
          for (std::size_t j = 0; j < C; ++j)
            t.at(i, j) += up.at(i) * std::exp(X.at(i, j) - L.at(i));
      });
    });
  }

  // ------------------------------------------------------------------ losses

  // Per-row cross entropy of softmax(logits) against integer targets.
  NodeId ce_softmax_rows(NodeId logits, std::vector<std::size_t> targets) {
    const Tensor& L = val(logits);
    assert(L.rank() == 2 && targets.size() == L.dim(0));
    const std::size_t R = L.dim(0), C = L.dim(1);
    Tensor out = Tensor::zeros({R});
    for (std::size_t i = 0; i < R; ++i) {
      assert(targets[i] < C);
      double mx = L.at(i, 0);
      for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, L.at(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < C; ++j) z += std::exp(L.at(i, j) - mx);
      out.at(i) = -(L.at(i, targets[i]) - mx - std::log(z));
    }
    auto tg = std::make_shared<std::vector<std::size_t>>(std::move(targets));
    return make(std::move(out), {logits}, [tg](Graph& g, NodeId id) {
      const Tensor& up = g.nodes_[id].grad;
      const Tensor& L = g.val(g.nodes_[id].parents[0]);
      const std::size_t R = L.dim(0), C = L.dim(1);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < R; ++i) {
          double mx = L.at(i, 0);
          for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, L.at(i, j));
          double z = 0.0;
          for (std::size_t j = 0; j < C; ++j) z += std::exp(L.at(i, j) - mx);
          for (std::size_t j = 0; j < C; ++j) {
            const double p = std::exp(L.at(i, j) - mx) / z;
            t.at(i, j) += up.at(i) * (p - (j == (*tg)[i] ? 1.0 : 0.0));
          }
        }
      });
    });
  }

  // Mean squared error against a fixed target tensor.
  NodeId mse_const(NodeId pred, Tensor truth) {
    const Tensor& P = val(pred);
    assert(P.same_shape(truth));
    const double n = static_cast<double>(P.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < P.data.size(); ++i) {
      const double d = P.data[i] - truth.data[i];
      s += d * d;
    }
    Tensor out = Tensor::zeros({1});
    out.at(0) = s / n;
    auto tr = std::make_shared<Tensor>(std::move(truth));
    return make(std::move(out), {pred}, [tr, n](Graph& g, NodeId id) {
      const double u = g.nodes_[id].grad.at(0);
      const Tensor& P = g.val(g.nodes_[id].parents[0]);
      g.accum(g.nodes_[id].parents[0], [&](Tensor& t) {
        for (std::size_t i = 0; i < t.data.size(); ++i)
          t.data[i] += u * 2.0 * (P.data[i] - tr->data[i]) / n;
      });
    });
  }

  // ---------------------------------------------------------------- backward

  void backward(NodeId root) {
    if (val(root).numel() != 1)
      throw std::invalid_argument("backward: root must be a scalar");
    for (Node& n : nodes_) {
      n.grad = Tensor::zeros(n.value.shape);
    }
    nodes_[root].grad.data[0] = 1.0;
    for (NodeId id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.needs_grad) n.backward(*this, id);
    }
  }

 private:
  friend struct GraphTestPeer;

  NodeId make(Tensor value, std::vector<NodeId> parents,
              std::function<void(Graph&, NodeId)> bw) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (NodeId p : n.parents)
      if (nodes_[p].needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  template <class F>
  void accum(NodeId p, F&& f) {
    if (!nodes_[p].needs_grad) return;
    f(nodes_[p].grad);
  }

  std::vector<Node> nodes_;
};

}  // namespace mvpa
