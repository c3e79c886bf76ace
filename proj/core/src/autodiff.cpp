#include "tma/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace tma {

VarId Tape::constant(Tensor value) {
    return push(std::move(value), nullptr);
}

VarId Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.grad = Tensor::zeros(p.value.shape);
    n.param = &p;
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::push(Tensor value, std::function<void(Tape&, VarId)> back) {
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

void Tape::backward(VarId root) {
    if (value(root).numel() != 1)
        throw ContractError("backward root must be scalar, got shape " + shape_str(value(root).shape));
    grad(root).data[0] = 1.0;
    for (VarId i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back) n.back(*this, i);
        if (n.param) {
            for (std::size_t j = 0; j < n.grad.data.size(); ++j)
                n.param->grad.data[j] += n.grad.data[j];
        }
    }
}

void matmul_raw(const double* a, int p, int q, const double* b, int r, double* out) {
    for (int i = 0; i < p; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * q;
        double* oi = out + static_cast<std::size_t>(i) * r;
        for (int kk = 0; kk < q; ++kk) {
            const double av = ai[kk];
            if (av == 0.0) continue;
            const double* bk = b + static_cast<std::size_t>(kk) * r;
            for (int j = 0; j < r; ++j) oi[j] += av * bk[j];
        }
    }
}

VarId matmul(Tape& t, VarId a, VarId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
        throw ShapeError("matmul shape mismatch: " + shape_str(A.shape) + " x " + shape_str(B.shape));
    const int p = A.shape[0], q = A.shape[1], r = B.shape[1];
    Tensor C = Tensor::zeros({p, r});
    matmul_raw(A.data.data(), p, q, B.data.data(), r, C.data.data());
    return t.push(std::move(C), [a, b, p, q, r](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        const double* av = tp.value(a).data.data();
        const double* bv = tp.value(b).data.data();
        double* ga = tp.grad(a).data.data();
        double* gb = tp.grad(b).data.data();
        // dA += dC * B^T
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < r; ++j) {
                const double gij = g[static_cast<std::size_t>(i) * r + j];
                if (gij == 0.0) continue;
                for (int kk = 0; kk < q; ++kk)
                    ga[static_cast<std::size_t>(i) * q + kk] += gij * bv[static_cast<std::size_t>(kk) * r + j];
            }
        // dB += A^T * dC
        for (int kk = 0; kk < q; ++kk)
            for (int i = 0; i < p; ++i) {
                const double aik = av[static_cast<std::size_t>(i) * q + kk];
                if (aik == 0.0) continue;
                const double* gi = g + static_cast<std::size_t>(i) * r;
                double* gbk = gb + static_cast<std::size_t>(kk) * r;
                for (int j = 0; j < r; ++j) gbk[j] += aik * gi[j];
            }
    });
}

int conv_out_extent(int in, int k, int stride, int pad) {
    const int span = in + 2 * pad - k;
    if (span < 0) return 0;  // C++ division truncates toward zero, not floor
    return span / stride + 1;
}

VarId im2col(Tape& t, VarId input, int k, int stride, int pad) {
    const Tensor& in = t.value(input);
    if (in.rank() != 3) throw ShapeError("im2col expects C x H x W, got " + shape_str(in.shape));
    const int ci = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int ho = conv_out_extent(h, k, stride, pad);
    const int wo = conv_out_extent(w, k, stride, pad);
    if (ho < 1 || wo < 1)
        throw ShapeError("conv output extent nonpositive for input " + shape_str(in.shape));
    Tensor cols = Tensor::zeros({ci * k * k, ho * wo});
    const int ncols = ho * wo;
    for (int c = 0; c < ci; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const int row = (c * k + ki) * k + kj;
                double* dst = cols.data.data() + static_cast<std::size_t>(row) * ncols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = in.data.data() + (static_cast<std::size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        if (ix < 0 || ix >= w) continue;
                        dst[oy * wo + ox] = src[ix];
                    }
                }
            }
    return t.push(std::move(cols), [input, k, stride, pad, ci, h, w, ho, wo](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* gi = tp.grad(input).data.data();
        const int ncols = ho * wo;
        for (int c = 0; c < ci; ++c)
            for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj) {
                    const int row = (c * k + ki) * k + kj;
                    const double* src = g + static_cast<std::size_t>(row) * ncols;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ki - pad;
                        if (iy < 0 || iy >= h) continue;
                        double* dst = gi + (static_cast<std::size_t>(c) * h + iy) * w;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kj - pad;
                            if (ix < 0 || ix >= w) continue;
                            dst[ix] += src[oy * wo + ox];
                        }
                    }
                }
    });
}

VarId conv2d(Tape& t, VarId input, VarId kernel, VarId bias, int stride, int pad) {
    const Tensor& in = t.value(input);
    const Tensor& kr = t.value(kernel);
    const Tensor& bs = t.value(bias);
    if (in.rank() != 3 || kr.rank() != 4)
        throw ShapeError("conv2d expects input CxHxW and kernel OxIxkxk, got " + shape_str(in.shape) +
                         " and " + shape_str(kr.shape));
    const int co = kr.shape[0], ci = kr.shape[1], k = kr.shape[2];
    if (kr.shape[3] != k) throw ShapeError("conv2d kernel must be square, got " + shape_str(kr.shape));
    if (k != 1 && k != 3) throw ShapeError("conv2d supports k in {1,3}, got " + std::to_string(k));
    if (stride != 1 && stride != 2)
        throw ShapeError("conv2d supports stride in {1,2}, got " + std::to_string(stride));
    if (ci != in.shape[0])
        throw ShapeError("conv2d channel mismatch: kernel " + shape_str(kr.shape) + " vs input " +
                         shape_str(in.shape));
    if (bs.rank() != 1 || bs.shape[0] != co)
        throw ShapeError("conv2d bias must have " + std::to_string(co) + " entries");
    const int ho = conv_out_extent(in.shape[1], k, stride, pad);
    const int wo = conv_out_extent(in.shape[2], k, stride, pad);
    if (ho < 1 || wo < 1)
        throw ShapeError("conv output extent nonpositive for input " + shape_str(in.shape));

    VarId cols = im2col(t, input, k, stride, pad);
    VarId kmat = reshape(t, kernel, {co, ci * k * k});
    VarId prod = matmul(t, kmat, cols);
    VarId biased = add_row_bias(t, prod, bias);
    return reshape(t, biased, {co, ho, wo});
}

VarId softmax_rows(Tape& t, VarId logits) {
    const Tensor& in = t.value(logits);
    if (in.rank() != 2) throw ShapeError("softmax_rows expects N x M, got " + shape_str(in.shape));
    const int n = in.shape[0], m = in.shape[1];
    Tensor out = Tensor::zeros(in.shape);
    for (int i = 0; i < n; ++i) {
        const double* row = in.data.data() + static_cast<std::size_t>(i) * m;
        double* orow = out.data.data() + static_cast<std::size_t>(i) * m;
        double mx = row[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < m; ++j) orow[j] /= sum;
    }
    return t.push(std::move(out), [logits, n, m](Tape& tp, VarId self) {
        const double* s = tp.value(self).data.data();
        const double* g = tp.grad(self).data.data();
        double* gl = tp.grad(logits).data.data();
        for (int i = 0; i < n; ++i) {
            const double* si = s + static_cast<std::size_t>(i) * m;
            const double* gi = g + static_cast<std::size_t>(i) * m;
            double dot = 0.0;
            for (int j = 0; j < m; ++j) dot += si[j] * gi[j];
            double* gli = gl + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) gli[j] += si[j] * (gi[j] - dot);
        }
    });
}

VarId concat_channels(Tape& t, VarId a, VarId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 3 || B.rank() != 3 || A.shape[1] != B.shape[1] || A.shape[2] != B.shape[2])
        throw ShapeError("concat_channels spatial mismatch: " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
    const int ca = A.shape[0], cb = B.shape[0];
    Tensor out = Tensor::zeros({ca + cb, A.shape[1], A.shape[2]});
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(A.numel()));
    const std::size_t na = A.numel(), nb = B.numel();
    return t.push(std::move(out), [a, b, na, nb](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* ga = tp.grad(a).data.data();
        double* gb = tp.grad(b).data.data();
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
    });
}

VarId stack_frames(Tape& t, const std::vector<VarId>& frames) {
    if (frames.empty()) throw ShapeError("stack_frames requires at least one frame");
    const Tensor& first = t.value(frames[0]);
    for (VarId f : frames)
        if (!t.value(f).same_shape(first))
            throw ShapeError("stack_frames shape mismatch: " + shape_str(t.value(f).shape) + " vs " +
                             shape_str(first.shape));
    std::vector<int> out_shape;
    out_shape.push_back(static_cast<int>(frames.size()));
    out_shape.insert(out_shape.end(), first.shape.begin(), first.shape.end());
    Tensor out = Tensor::zeros(out_shape);
    const std::size_t per = first.numel();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Tensor& f = t.value(frames[i]);
        std::copy(f.data.begin(), f.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return t.push(std::move(out), [frames, per](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            double* gf = tp.grad(frames[i]).data.data();
            for (std::size_t j = 0; j < per; ++j) gf[j] += g[i * per + j];
        }
    });
}

VarId permute(Tape& t, VarId v, const std::vector<int>& order) {
    Tensor out = permute_raw(t.value(v), order);
    std::vector<int> inverse(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        inverse[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    return t.push(std::move(out), [v, inverse](Tape& tp, VarId self) {
        Tensor g = permute_raw(tp.grad(self), inverse);
        double* gv = tp.grad(v).data.data();
        for (std::size_t i = 0; i < g.data.size(); ++i) gv[i] += g.data[i];
    });
}

VarId reshape(Tape& t, VarId v, const std::vector<int>& new_shape) {
    const Tensor& in = t.value(v);
    if (shape_numel(new_shape) != in.numel())
        throw ShapeError("reshape element count mismatch: " + shape_str(in.shape) + " -> " +
                         shape_str(new_shape));
    Tensor out(new_shape, in.data);
    return t.push(std::move(out), [v](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* gv = tp.grad(v).data.data();
        for (std::size_t i = 0; i < tp.grad(self).data.size(); ++i) gv[i] += g[i];
    });
}

VarId reshape_permute(Tape& t, VarId v, const std::vector<int>& order, const std::vector<int>& new_shape) {
    return reshape(t, permute(t, v, order), new_shape);
}

VarId relu(Tape& t, VarId v) {
    const Tensor& in = t.value(v);
    Tensor out = in;
    for (double& x : out.data) x = std::max(0.0, x);
    return t.push(std::move(out), [v](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        const double* x = tp.value(v).data.data();
        double* gv = tp.grad(v).data.data();
        for (std::size_t i = 0; i < tp.grad(self).data.size(); ++i)
            if (x[i] > 0.0) gv[i] += g[i];
    });
}

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

LerpAxis bilinear_axis(int in, int out) {
    LerpAxis ax;
    ax.i0.resize(static_cast<std::size_t>(out));
    ax.i1.resize(static_cast<std::size_t>(out));
    ax.w1.resize(static_cast<std::size_t>(out));
    const double s = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * s - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(std::floor(src));
        ax.i0[static_cast<std::size_t>(o)] = lo;
        ax.i1[static_cast<std::size_t>(o)] = std::min(lo + 1, in - 1);
        ax.w1[static_cast<std::size_t>(o)] = src - lo;
    }
    return ax;
}

}  // namespace

VarId upsample_bilinear(Tape& t, VarId v, int out_h, int out_w) {
    const Tensor& in = t.value(v);
    if (in.rank() != 3) throw ShapeError("upsample expects C x h x w, got " + shape_str(in.shape));
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    if (out_h == h && out_w == w) {
        Tensor out = in;
        return t.push(std::move(out), [v](Tape& tp, VarId self) {
            const double* g = tp.grad(self).data.data();
            double* gv = tp.grad(v).data.data();
            for (std::size_t i = 0; i < tp.grad(self).data.size(); ++i) gv[i] += g[i];
        });
    }
    LerpAxis ay = bilinear_axis(h, out_h);
    LerpAxis ax = bilinear_axis(w, out_w);
    Tensor out = Tensor::zeros({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in.data.data() + static_cast<std::size_t>(ch) * h * w;
        double* oplane = out.data.data() + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const double wy = ay.w1[static_cast<std::size_t>(y)];
            const int y0 = ay.i0[static_cast<std::size_t>(y)], y1 = ay.i1[static_cast<std::size_t>(y)];
            for (int x = 0; x < out_w; ++x) {
                const double wx = ax.w1[static_cast<std::size_t>(x)];
                const int x0 = ax.i0[static_cast<std::size_t>(x)], x1 = ax.i1[static_cast<std::size_t>(x)];
                oplane[y * out_w + x] = (1 - wy) * ((1 - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
                                        wy * ((1 - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
            }
        }
    }
    return t.push(std::move(out), [v, c, h, w, out_h, out_w, ay, ax](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* gv = tp.grad(v).data.data();
        for (int ch = 0; ch < c; ++ch) {
            double* gplane = gv + static_cast<std::size_t>(ch) * h * w;
            const double* goplane = g + static_cast<std::size_t>(ch) * out_h * out_w;
            for (int y = 0; y < out_h; ++y) {
                const double wy = ay.w1[static_cast<std::size_t>(y)];
                const int y0 = ay.i0[static_cast<std::size_t>(y)], y1 = ay.i1[static_cast<std::size_t>(y)];
                for (int x = 0; x < out_w; ++x) {
                    const double wx = ax.w1[static_cast<std::size_t>(x)];
                    const int x0 = ax.i0[static_cast<std::size_t>(x)], x1 = ax.i1[static_cast<std::size_t>(x)];
                    const double go = goplane[y * out_w + x];
                    gplane[y0 * w + x0] += (1 - wy) * (1 - wx) * go;
                    gplane[y0 * w + x1] += (1 - wy) * wx * go;
                    gplane[y1 * w + x0] += wy * (1 - wx) * go;
                    gplane[y1 * w + x1] += wy * wx * go;
                }
            }
        }
    });
}

VarId cross_entropy(Tape& t, VarId logits, const std::vector<std::uint8_t>& labels, int ignore_index) {
    const Tensor& in = t.value(logits);
    if (in.rank() != 3) throw ShapeError("cross_entropy expects C x H x W, got " + shape_str(in.shape));
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int npix = h * w;
    if (static_cast<int>(labels.size()) != npix)
        throw ShapeError("label map size " + std::to_string(labels.size()) + " != " + std::to_string(npix));
    for (std::uint8_t l : labels)
        if (l != ignore_index && l >= c)
            throw ContractError("label " + std::to_string(l) + " out of range for " + std::to_string(c) +
                                " classes");

    // probs cached for the backward pass
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c) * npix, 0.0);
    double loss = 0.0;
    int count = 0;
    for (int p = 0; p < npix; ++p) {
        if (labels[static_cast<std::size_t>(p)] == ignore_index) continue;
        double mx = in.data[static_cast<std::size_t>(p)];
        for (int cc = 1; cc < c; ++cc)
            mx = std::max(mx, in.data[static_cast<std::size_t>(cc) * npix + p]);
        double sum = 0.0;
        for (int cc = 0; cc < c; ++cc) {
            const double e = std::exp(in.data[static_cast<std::size_t>(cc) * npix + p] - mx);
            (*probs)[static_cast<std::size_t>(cc) * npix + p] = e;
            sum += e;
        }
        for (int cc = 0; cc < c; ++cc) (*probs)[static_cast<std::size_t>(cc) * npix + p] /= sum;
        const int lbl = labels[static_cast<std::size_t>(p)];
        loss += std::log(sum) + mx - in.data[static_cast<std::size_t>(lbl) * npix + p];
        ++count;
    }
    if (count == 0) throw ContractError("empty loss: all pixels carry the ignore label");
    loss /= count;

    return t.push(Tensor({1}, {loss}),
                  [logits, labels, ignore_index, c, npix, count, probs](Tape& tp, VarId self) {
                      const double g = tp.grad(self).data[0];
                      double* gl = tp.grad(logits).data.data();
                      const double scale = g / count;
                      for (int p = 0; p < npix; ++p) {
                          const std::uint8_t lbl = labels[static_cast<std::size_t>(p)];
                          if (lbl == ignore_index) continue;
                          for (int cc = 0; cc < c; ++cc) {
                              double d = (*probs)[static_cast<std::size_t>(cc) * npix + p];
                              if (cc == lbl) d -= 1.0;
                              gl[static_cast<std::size_t>(cc) * npix + p] += scale * d;
                          }
                      }
                  });
}

VarId add(Tape& t, VarId a, VarId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B))
        throw ShapeError("add shape mismatch: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    return t.push(std::move(out), [a, b](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* ga = tp.grad(a).data.data();
        double* gb = tp.grad(b).data.data();
        for (std::size_t i = 0; i < tp.grad(self).data.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

VarId scale(Tape& t, VarId v, double c) {
    Tensor out = t.value(v);
    for (double& x : out.data) x *= c;
    return t.push(std::move(out), [v, c](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* gv = tp.grad(v).data.data();
        for (std::size_t i = 0; i < tp.grad(self).data.size(); ++i) gv[i] += c * g[i];
    });
}

VarId add_row_bias(Tape& t, VarId m, VarId bias) {
    const Tensor& M = t.value(m);
    const Tensor& B = t.value(bias);
    if (M.rank() != 2 || B.rank() != 1 || B.shape[0] != M.shape[0])
        throw ShapeError("add_row_bias shape mismatch: " + shape_str(M.shape) + " vs " + shape_str(B.shape));
    const int rows = M.shape[0], cols = M.shape[1];
    Tensor out = M;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i) * cols + j] += B.data[static_cast<std::size_t>(i)];
    return t.push(std::move(out), [m, bias, rows, cols](Tape& tp, VarId self) {
        const double* g = tp.grad(self).data.data();
        double* gm = tp.grad(m).data.data();
        double* gb = tp.grad(bias).data.data();
        for (int i = 0; i < rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < cols; ++j) {
                const double gij = g[static_cast<std::size_t>(i) * cols + j];
                gm[static_cast<std::size_t>(i) * cols + j] += gij;
                s += gij;
            }
            gb[static_cast<std::size_t>(i)] += s;
        }
    });
}

VarId sum_all(Tape& t, VarId v) {
    const Tensor& in = t.value(v);
    double s = 0.0;
    for (double x : in.data) s += x;
    return t.push(Tensor({1}, {s}), [v](Tape& tp, VarId self) {
        const double g = tp.grad(self).data[0];
        double* gv = tp.grad(v).data.data();
        for (std::size_t i = 0; i < tp.grad(v).data.size(); ++i) gv[i] += g;
    });
}

}  // namespace tma
