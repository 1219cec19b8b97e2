#include "ebms/occupancy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include "ebms/errors.hpp"
#include "ebms/fft.hpp"
#include "ebms/rng.hpp"

namespace ebms {

namespace {

std::string format_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

// breadth-first order of the subtree hanging off `init`, with edge
// depths; only these states can be occupied
struct Subtree {
  std::vector<int> order;   // states, init first
  std::vector<int> depth;   // per state, -1 if unreachable
  std::vector<int> in_edge; // transition id entering each state
  int max_depth = 0;
};

Subtree subtree_of(const TransitionStructure& s, int init) {
  Subtree t;
  t.depth.assign(static_cast<std::size_t>(s.n_states()), -1);
  t.in_edge.assign(static_cast<std::size_t>(s.n_states()), 0);
  t.depth[static_cast<std::size_t>(init)] = 0;
  t.order.push_back(init);
  for (std::size_t q = 0; q < t.order.size(); ++q) {
    const int v = t.order[q];
    for (int id : s.out_transitions(v)) {
      const int w = s.transition(id).to;
      t.depth[static_cast<std::size_t>(w)] = t.depth[static_cast<std::size_t>(v)] + 1;
      t.in_edge[static_cast<std::size_t>(w)] = id;
      t.max_depth = std::max(t.max_depth, t.depth[static_cast<std::size_t>(w)]);
      t.order.push_back(w);
    }
  }
  return t;
}

void clip_unit(std::vector<double>& v, double& excess) {
  for (double& x : v) {
    if (x < 0.0) {
      excess = std::max(excess, -x);
      x = 0.0;
    } else if (x > 1.0) {
      excess = std::max(excess, x - 1.0);
      x = 1.0;
    }
  }
}

}  // namespace

SojournKernels discretize_kernels(const HazardBundle& bundle, int K,
                                  double t_max) {
  require(bundle.scale == TimeScale::clock_reset, ErrorKind::BadInput,
          "sojourn kernels need clock-reset hazards");
  require(bundle.structure.is_tree(), ErrorKind::NotTree,
          "sojourn-convolution estimators need a tree structure");
  require(K >= 2, ErrorKind::BadInput, "grid needs at least two cells");
  require(t_max > 0.0, ErrorKind::BadInput, "t_max must be positive");

  const TransitionStructure& s = bundle.structure;
  SojournKernels ker;
  ker.structure = s;
  ker.K = K;
  ker.dt = t_max / K;
  ker.horizon_warning = t_max > bundle.last_jump_time();

  std::map<int, std::vector<double>> grid;
  for (const auto& [trans, fn] : bundle.cumhaz) grid[trans] = fn.on_grid(K, ker.dt);
  for (const auto& t : s.transitions())  // absent curves count as flat zero
    if (!grid.count(t.id))
      grid[t.id].assign(static_cast<std::size_t>(K) + 1, 0.0);

  ker.survivor.assign(static_cast<std::size_t>(s.n_states()), {});
  for (int i = 0; i < s.n_states(); ++i) {
    const auto& outs = s.out_transitions(i);
    auto& surv = ker.survivor[static_cast<std::size_t>(i)];
    surv.assign(static_cast<std::size_t>(K) + 1, 1.0);
    if (outs.empty()) continue;  // absorbing: survival is identically 1

    std::vector<double> total(static_cast<std::size_t>(K) + 1, 0.0);
    for (int id : outs) {
      const auto& g = grid.at(id);
      for (int k = 0; k <= K; ++k)
        total[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k <= K; ++k)
      surv[static_cast<std::size_t>(k)] = std::exp(-total[static_cast<std::size_t>(k)]);

    // split each cell's exit mass across outbound transitions in
    // proportion to their hazard increments; the pieces then add back
    // to surv[k] - surv[k+1] exactly, which is what makes the state
    // probabilities sum to one
    for (int id : outs)
      ker.density[id].assign(static_cast<std::size_t>(K), 0.0);
    for (int k = 0; k < K; ++k) {
      const double cell = surv[static_cast<std::size_t>(k)] -
                          surv[static_cast<std::size_t>(k) + 1];
      const double dtot = total[static_cast<std::size_t>(k) + 1] -
                          total[static_cast<std::size_t>(k)];
      if (dtot <= 0.0) continue;
      for (int id : outs) {
        const auto& g = grid.at(id);
        const double dl = g[static_cast<std::size_t>(k) + 1] -
                          g[static_cast<std::size_t>(k)];
        ker.density.at(id)[static_cast<std::size_t>(k)] = cell * dl / dtot;
      }
    }
  }
  return ker;
}

OccupancyGrid occupancy_direct(const SojournKernels& ker, int initial_state) {
  const TransitionStructure& s = ker.structure;
  require(initial_state >= 0 && initial_state < s.n_states(),
          ErrorKind::BadInput, "initial state out of range");
  const int K = ker.K;

  OccupancyGrid out;
  out.initial_state = initial_state;
  out.K = K;
  out.dt = ker.dt;
  out.horizon_warning = ker.horizon_warning;
  out.probs.assign(static_cast<std::size_t>(s.n_states()),
                   std::vector<double>(static_cast<std::size_t>(K) + 1, 0.0));
  out.probs[static_cast<std::size_t>(initial_state)] =
      ker.survivor[static_cast<std::size_t>(initial_state)];

  const Subtree tree = subtree_of(s, initial_state);

  // arrival[c][l]: probability of entering state c during grid cell l,
  // shifted so that each convolution stage adds one cell of delay
  std::vector<std::vector<double>> arrival(
      static_cast<std::size_t>(s.n_states()));
  for (int v : tree.order) {
    if (v == initial_state) continue;
    const int e = tree.in_edge[static_cast<std::size_t>(v)];
    const int parent = s.transition(e).from;
    const auto& q = ker.density.at(e);
    auto& a = arrival[static_cast<std::size_t>(v)];
    if (parent == initial_state) {
      a = q;
    } else {
      const auto& ap = arrival[static_cast<std::size_t>(parent)];
      a.assign(static_cast<std::size_t>(K), 0.0);
      for (int l = 0; l + 1 < K; ++l) {
        const double b = ap[static_cast<std::size_t>(l)];
        if (b == 0.0) continue;
        for (int k = l + 1; k < K; ++k)
          a[static_cast<std::size_t>(k)] +=
              q[static_cast<std::size_t>(k - 1 - l)] * b;
      }
    }
    // occupancy: arrive during cell l, then survive k - 1 - l cells
    const auto& r = ker.survivor[static_cast<std::size_t>(v)];
    auto& pv = out.probs[static_cast<std::size_t>(v)];
    for (int l = 0; l < K; ++l) {
      const double b = a[static_cast<std::size_t>(l)];
      if (b == 0.0) continue;
      for (int k = l + 1; k <= K; ++k)
        pv[static_cast<std::size_t>(k)] +=
            r[static_cast<std::size_t>(k - 1 - l)] * b;
    }
  }

  for (auto& pv : out.probs) clip_unit(pv, out.clip_excess);
  return out;
}

OccupancyGrid occupancy_fft(const SojournKernels& ker, int initial_state) {
  const TransitionStructure& s = ker.structure;
  require(initial_state >= 0 && initial_state < s.n_states(),
          ErrorKind::BadInput, "initial state out of range");
  const int K = ker.K;

  OccupancyGrid out;
  out.initial_state = initial_state;
  out.K = K;
  out.dt = ker.dt;
  out.horizon_warning = ker.horizon_warning;
  out.probs.assign(static_cast<std::size_t>(s.n_states()),
                   std::vector<double>(static_cast<std::size_t>(K) + 1, 0.0));
  out.probs[static_cast<std::size_t>(initial_state)] =
      ker.survivor[static_cast<std::size_t>(initial_state)];

  const Subtree tree = subtree_of(s, initial_state);
  if (tree.max_depth == 0) return out;

  // One shared transform size covers every stage: arrival kernels are
  // truncated back to K cells after each convolution (exact, because
  // the readout below never uses later cells), so no product ever
  // outgrows degree 2K - 1 and wraparound cannot reach the reported
  // range [0, K].
  const std::size_t N = good_fft_size(2 * static_cast<std::size_t>(K));

  // spectra of the (truncated) arrival kernels, edge by edge down the
  // tree; the accumulated one-cell delays are applied at readout
  std::vector<std::vector<std::complex<double>>> arrival_spec(
      static_cast<std::size_t>(s.n_states()));
  for (int v : tree.order) {
    if (v == initial_state) continue;
    const int e = tree.in_edge[static_cast<std::size_t>(v)];
    const int parent = s.transition(e).from;
    std::vector<std::complex<double>> spec = rfft(ker.density.at(e), N);
    if (parent != initial_state) {
      const auto& ps = arrival_spec[static_cast<std::size_t>(parent)];
      for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= ps[i];
      std::vector<double> a = irfft(spec, N);
      a.resize(static_cast<std::size_t>(K));
      spec = rfft(a, N);
    }
    auto prod = rfft(ker.survivor[static_cast<std::size_t>(v)], N);
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= spec[i];
    const auto raw = irfft(prod, N);
    const int d = tree.depth[static_cast<std::size_t>(v)];
    auto& pv = out.probs[static_cast<std::size_t>(v)];
    for (int k = d; k <= K; ++k)
      pv[static_cast<std::size_t>(k)] = raw[static_cast<std::size_t>(k - d)];
    arrival_spec[static_cast<std::size_t>(v)] = std::move(spec);
  }

  for (auto& pv : out.probs) clip_unit(pv, out.clip_excess);
  return out;
}

OccupancyGrid occupancy_aalen_johansen(const HazardBundle& bundle,
                                       int initial_state, int K, double t_max) {
  require(bundle.scale == TimeScale::clock_forward, ErrorKind::BadInput,
          "the product-limit estimator needs clock-forward hazards");
  const TransitionStructure& s = bundle.structure;
  require(initial_state >= 0 && initial_state < s.n_states(),
          ErrorKind::BadInput, "initial state out of range");
  require(K >= 1 && t_max > 0.0, ErrorKind::BadInput, "bad grid request");

  // merged jump schedule: (time, transition, increment)
  struct Jump {
    double time;
    int trans;
    double delta;
  };
  std::vector<Jump> jumps;
  for (const auto& [trans, fn] : bundle.cumhaz)
    for (std::size_t i = 1; i < fn.times.size(); ++i)
      jumps.push_back({fn.times[i], trans, fn.values[i] - fn.values[i - 1]});
  std::sort(jumps.begin(), jumps.end(), [](const Jump& a, const Jump& b) {
    return a.time != b.time ? a.time < b.time : a.trans < b.trans;
  });

  OccupancyGrid out;
  out.initial_state = initial_state;
  out.K = K;
  out.dt = t_max / K;
  out.horizon_warning = t_max > bundle.last_jump_time();
  out.probs.assign(static_cast<std::size_t>(s.n_states()),
                   std::vector<double>(static_cast<std::size_t>(K) + 1, 0.0));

  std::vector<double> v(static_cast<std::size_t>(s.n_states()), 0.0);
  v[static_cast<std::size_t>(initial_state)] = 1.0;
  std::vector<double> nv(v.size());
  std::vector<double> out_sum(v.size());

  std::size_t j = 0;
  for (int k = 0; k <= K; ++k) {
    const double t = k * out.dt;
    while (j < jumps.size() && jumps[j].time <= t) {
      // apply the product factor I + dA for one event time
      const double u = jumps[j].time;
      nv = v;
      std::fill(out_sum.begin(), out_sum.end(), 0.0);
      while (j < jumps.size() && jumps[j].time == u) {
        const auto& tr = s.transition(jumps[j].trans);
        nv[static_cast<std::size_t>(tr.to)] +=
            v[static_cast<std::size_t>(tr.from)] * jumps[j].delta;
        out_sum[static_cast<std::size_t>(tr.from)] += jumps[j].delta;
        ++j;
      }
      for (std::size_t i = 0; i < v.size(); ++i) {
        require(out_sum[i] <= 1.0 + 1e-12, ErrorKind::NegativeDiagonal,
                "total hazard increment above one at time " + std::to_string(u));
        nv[i] -= v[i] * out_sum[i];
      }
      v = nv;
    }
    for (std::size_t i = 0; i < v.size(); ++i)
      out.probs[i][static_cast<std::size_t>(k)] = v[i];
  }
  return out;
}

namespace {

// one sampled trajectory, written into per-state visit counts
void sample_into(const HazardBundle& bundle, int initial_state, Rng& rng,
                 int K, double dt,
                 std::vector<std::vector<std::uint64_t>>& counts) {
  const TransitionStructure& s = bundle.structure;
  const bool reset = bundle.scale == TimeScale::clock_reset;

  // (transition time, next state) pairs
  std::vector<std::pair<double, int>> moves;
  int state = initial_state;
  double t = 0.0;
  for (;;) {
    const auto& outs = s.out_transitions(state);
    if (outs.empty()) break;
    double best = std::numeric_limits<double>::infinity();
    int best_to = -1;
    for (int id : outs) {
      const double e = rng.exponential(1.0);
      auto it = bundle.cumhaz.find(id);
      if (it == bundle.cumhaz.end()) continue;  // no hazard mass at all
      const StepFunction& fn = it->second;
      double cand;
      if (reset) {
        cand = t + fn.first_time_reaching(e);
      } else {
        cand = fn.first_time_reaching(fn(t) + e);
      }
      if (cand < best) {
        best = cand;
        best_to = s.transition(id).to;
      }
    }
    if (!std::isfinite(best)) break;  // hazard mass exhausted: stays put
    moves.emplace_back(best, best_to);
    state = best_to;
    t = best;
  }

  state = initial_state;
  std::size_t next = 0;
  for (int k = 0; k <= K; ++k) {
    const double tk = k * dt;
    while (next < moves.size() && moves[next].first <= tk)
      state = moves[next++].second;
    ++counts[static_cast<std::size_t>(state)][static_cast<std::size_t>(k)];
  }
}

}  // namespace

OccupancyGrid occupancy_sampled(const HazardBundle& bundle, int n_paths,
                                int initial_state, std::uint64_t seed, int K,
                                double t_max, const SampleOptions& opt) {
  const TransitionStructure& s = bundle.structure;
  require(s.is_acyclic(), ErrorKind::BadInput,
          "path sampling needs an acyclic structure");
  require(initial_state >= 0 && initial_state < s.n_states(),
          ErrorKind::BadInput, "initial state out of range");
  require(n_paths > 0 && K >= 1 && t_max > 0.0, ErrorKind::BadInput,
          "bad sampling request");

  OccupancyGrid out;
  out.initial_state = initial_state;
  out.K = K;
  out.dt = t_max / K;
  out.horizon_warning = t_max > bundle.last_jump_time();

  const int S = s.n_states();
  const int block = std::max(1, opt.block);
  const int n_blocks = (n_paths + block - 1) / block;
  std::vector<std::vector<std::uint64_t>> counts(
      static_cast<std::size_t>(S),
      std::vector<std::uint64_t>(static_cast<std::size_t>(K) + 1, 0));

  // Each block owns an RNG substream keyed by its index, so the merged
  // counts do not depend on how blocks are spread over threads.
  auto run_blocks = [&](int first, int step,
                        std::vector<std::vector<std::uint64_t>>& local) {
    for (int b = first; b < n_blocks; b += step) {
      Rng rng(seed, static_cast<std::uint64_t>(b), 0x706174687332ULL);
      const int lo = b * block;
      const int hi = std::min(n_paths, lo + block);
      for (int i = lo; i < hi; ++i)
        sample_into(bundle, initial_state, rng, K, out.dt, local);
    }
  };

  const int n_threads = std::max(1, opt.threads);
  if (n_threads == 1) {
    run_blocks(0, 1, counts);
  } else {
    std::vector<std::vector<std::vector<std::uint64_t>>> locals(
        static_cast<std::size_t>(n_threads),
        std::vector<std::vector<std::uint64_t>>(
            static_cast<std::size_t>(S),
            std::vector<std::uint64_t>(static_cast<std::size_t>(K) + 1, 0)));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back(run_blocks, w, n_threads,
                        std::ref(locals[static_cast<std::size_t>(w)]));
    for (auto& th : pool) th.join();
    for (const auto& local : locals)
      for (int i = 0; i < S; ++i)
        for (int k = 0; k <= K; ++k)
          counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +=
              local[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }

  out.probs.assign(static_cast<std::size_t>(S),
                   std::vector<double>(static_cast<std::size_t>(K) + 1, 0.0));
  for (int i = 0; i < S; ++i)
    for (int k = 0; k <= K; ++k)
      out.probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          static_cast<double>(
              counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]) /
          static_cast<double>(n_paths);
  return out;
}

void write_occupancy_csv(const std::string& path, const OccupancyGrid& grid,
                         const TransitionStructure& s) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::BadInput, "cannot write '" + path + "'");
  out << "time";
  for (int i = 1; i <= s.n_states(); ++i) out << ",state_" << i;
  out << '\n';
  for (int k = 0; k <= grid.K; ++k) {
    out << format_double(grid.time(k));
    for (const auto& pv : grid.probs)
      out << ',' << format_double(pv[static_cast<std::size_t>(k)]);
    out << '\n';
  }
}

}  // namespace ebms
