"""Event-loop and network kernels.

Everything here takes and returns plain numpy arrays so the same source
compiles under numba or runs as ordinary Python (see ``_accel``). Random
variates are drawn outside the kernels, which keeps both paths bit-identical.
"""
import numpy as np

from ._accel import njit

POLICY_TABLE = 0
POLICY_RRBFN = 1

KIND_ARRIVAL = 0
KIND_DEPARTURE = 1


@njit
def _heap_less(t, s, i, j):
    return t[i] < t[j] or (t[i] == t[j] and s[i] < s[j])


@njit
def _heap_swap(t, s, c, i, j):
    t[i], t[j] = t[j], t[i]
    s[i], s[j] = s[j], s[i]
    c[i], c[j] = c[j], c[i]


@njit
def _heap_push(t, s, c, size, time, seq, cls):
    i = size
    t[i] = time
    s[i] = seq
    c[i] = cls
    while i > 0:
        parent = (i - 1) // 2
        if _heap_less(t, s, i, parent):
            _heap_swap(t, s, c, i, parent)
            i = parent
        else:
            break
    return size + 1


@njit
def _heap_pop(t, s, c, size):
    """Remove the root; returns the new size. The caller reads the root before calling."""
    size -= 1
    if size > 0:
        t[0] = t[size]
        s[0] = s[size]
        c[0] = c[size]
        i = 0
        while True:
            left = 2 * i + 1
            right = left + 1
            smallest = i
            if left < size and _heap_less(t, s, left, smallest):
                smallest = left
            if right < size and _heap_less(t, s, right, smallest):
                smallest = right
            if smallest == i:
                break
            _heap_swap(t, s, c, i, smallest)
            i = smallest
    return size


@njit
def fncac_features(occupied, capacity, class_idx, n_classes, utilization, rat_caps, rat_costs, cost_norm, demand, out):
    """Fill ``out`` with [per-RAT occupancy, one-hot class, utilization, cost].

    Occupied channels are laid onto the RATs in order, filling each before the next.
    """
    n_rats = rat_caps.shape[0]
    remaining = occupied
    best = 0
    best_ratio = 2.0
    for r in range(n_rats):
        load = min(remaining, rat_caps[r])
        remaining -= load
        ratio = load / rat_caps[r]
        out[r] = ratio
        if ratio < best_ratio:
            best_ratio = ratio
            best = r
    for k in range(n_classes):
        out[n_rats + k] = 1.0 if k == class_idx else 0.0
    out[n_rats + n_classes] = utilization
    out[n_rats + n_classes + 1] = demand * rat_costs[best] / cost_norm


@njit
def rrbfn_forward(x, centers_flat, widths_flat, layer_sizes, out_w, out_b, buf_a, buf_b):
    """Output of the Gaussian stack for input-neuron state ``x``."""
    fan_in = x.shape[0]
    for j in range(fan_in):
        buf_a[j] = x[j]
    c_pos = 0
    w_pos = 0
    for l in range(layer_sizes.shape[0]):
        h = layer_sizes[l]
        for i in range(h):
            d2 = 0.0
            base = c_pos + i * fan_in
            for j in range(fan_in):
                diff = buf_a[j] - centers_flat[base + j]
                d2 += diff * diff
            buf_b[i] = np.exp(-d2 / widths_flat[w_pos + i])
        c_pos += h * fan_in
        w_pos += h
        fan_in = h
        for i in range(h):
            buf_a[i] = buf_b[i]
    y = out_b
    for i in range(fan_in):
        y += out_w[i] * buf_a[i]
    return y


@njit
def simulate(
    interarrivals,
    holdings,
    demands,
    capacity,
    total_arrivals,
    warmup,
    policy_kind,
    admit_table,
    recurrent,
    centers_flat,
    widths_flat,
    layer_sizes,
    out_w,
    out_b,
    in_offset,
    in_gain,
    rat_caps,
    rat_costs,
    cost_norm,
    utilization,
    score_threshold,
    record_trace,
):
    """Run one replication of the loss cell.

    ``interarrivals[k, j]`` and ``holdings[k, j]`` belong to the j-th arrival of
    class k. Departures win ties against arrivals; simultaneous departures leave
    in admission order. Returns per-class offered/blocked counts after warmup and
    the (optional) event trace.
    """
    n_classes = demands.shape[0]
    offered = np.zeros(n_classes, dtype=np.int64)
    blocked = np.zeros(n_classes, dtype=np.int64)
    active = np.zeros(n_classes, dtype=np.int64)
    next_idx = np.zeros(n_classes, dtype=np.int64)
    next_time = np.empty(n_classes)
    for k in range(n_classes):
        next_time[k] = interarrivals[k, 0]

    heap_cap = capacity + 1
    h_t = np.empty(heap_cap)
    h_s = np.empty(heap_cap, dtype=np.int64)
    h_c = np.empty(heap_cap, dtype=np.int64)
    h_size = 0
    seq = 0

    n_trace = 2 * total_arrivals if record_trace else 1
    tr_time = np.empty(n_trace)
    tr_kind = np.empty(n_trace, dtype=np.int64)
    tr_class = np.empty(n_trace, dtype=np.int64)
    tr_free = np.empty(n_trace, dtype=np.int64)
    tr_dec = np.empty(n_trace, dtype=np.int64)
    n_events = 0

    n_in = recurrent.shape[0]
    state = np.zeros(n_in)
    feats = np.empty(n_in)
    width = n_in
    for l in range(layer_sizes.shape[0]):
        width = max(width, layer_sizes[l])
    buf_a = np.empty(width)
    buf_b = np.empty(width)

    free = capacity
    arrivals = 0
    while arrivals < total_arrivals:
        k_next = 0
        for k in range(1, n_classes):
            if next_time[k] < next_time[k_next]:
                k_next = k
        t_arr = next_time[k_next]
        if not np.isfinite(t_arr):
            break
        if h_size > 0 and h_t[0] <= t_arr:
            cls = h_c[0]
            t_dep = h_t[0]
            h_size = _heap_pop(h_t, h_s, h_c, h_size)
            if record_trace:
                tr_time[n_events] = t_dep
                tr_kind[n_events] = KIND_DEPARTURE
                tr_class[n_events] = cls
                tr_free[n_events] = free
                tr_dec[n_events] = -1
                n_events += 1
            free += demands[cls]
            active[cls] -= 1
            continue

        k = k_next
        b = demands[k]
        if policy_kind == POLICY_TABLE:
            admit = admit_table[free, k]
        else:
            fncac_features(capacity - free, capacity, k, n_classes, utilization, rat_caps, rat_costs, cost_norm, b, feats)
            for j in range(n_in):
                u = (feats[j] - in_offset[j]) * in_gain[j]
                state[j] = 1.0 / (1.0 + np.exp(-(u + recurrent[j] * state[j])))
            score = rrbfn_forward(state, centers_flat, widths_flat, layer_sizes, out_w, out_b, buf_a, buf_b)
            admit = score >= score_threshold and free >= b

        if record_trace:
            tr_time[n_events] = t_arr
            tr_kind[n_events] = KIND_ARRIVAL
            tr_class[n_events] = k
            tr_free[n_events] = free
            tr_dec[n_events] = 1 if admit else 0
            n_events += 1
        if arrivals >= warmup:
            offered[k] += 1
            if not admit:
                blocked[k] += 1
        if admit:
            free -= b
            active[k] += 1
            h_size = _heap_push(h_t, h_s, h_c, h_size, t_arr + holdings[k, next_idx[k]], seq, k)
            seq += 1
        next_idx[k] += 1
        next_time[k] = t_arr + interarrivals[k, next_idx[k]] if next_idx[k] < interarrivals.shape[1] else np.inf
        arrivals += 1

    return offered, blocked, tr_time[:n_events], tr_kind[:n_events], tr_class[:n_events], tr_free[:n_events], tr_dec[:n_events]
