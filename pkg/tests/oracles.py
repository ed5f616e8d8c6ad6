"""Independent scalar-loop reference implementations used as test oracles.

Everything here is deliberately written with plain Python loops and the
math module so it shares no code path with the package under test.
"""

import math


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def softmax_scalar(values):
    mx = max(values)
    exps = [math.exp(v - mx) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def matvec(matrix, vector):
    return [sum(matrix[r][j] * vector[j] for j in range(len(vector))) for r in range(len(matrix))]


def lstm_step_scalar(x, h_prev, c_prev, params):
    """One plain LSTM step; params maps w_f/u_f/b_f (and i, o, c) to nested lists."""
    p = len(h_prev)

    def gate(name, act):
        pre = matvec(params[f"w_{name}"], x)
        rec = matvec(params[f"u_{name}"], h_prev)
        return [act(pre[r] + rec[r] + params[f"b_{name}"][r]) for r in range(p)]

    forget = gate("f", sigmoid)
    update = gate("i", sigmoid)
    candidate = gate("c", math.tanh)
    cell = [forget[r] * c_prev[r] + update[r] * candidate[r] for r in range(p)]
    out = gate("o", sigmoid)
    hidden = [out[r] * math.tanh(cell[r]) for r in range(p)]
    return hidden, cell


def cm_lstm_step_scalar(v, q, h_prev, c_prev, params):
    """One cross-modal step mirroring the published update rule coordinate by
    coordinate: softmax filter, two tanh modal paths with shared recurrence,
    four sigmoid gates, modal blend, LSTM state update."""
    p = len(h_prev)
    mixed_q = matvec(params["w_filter_query"], q)
    mixed_v = matvec(params["w_filter_clip"], v)
    mixed = [math.tanh(mixed_q[r] + mixed_v[r]) for r in range(p)]
    filt = softmax_scalar(matvec(params["w_filter_mix"], mixed))

    clip_proj = matvec(params["w_clip_path"], v)
    query_proj = matvec(params["w_query_path"], q)
    recur = matvec(params["u_context"], h_prev)
    clip_path = [math.tanh(filt[r] * clip_proj[r] + recur[r]) for r in range(p)]
    query_path = [math.tanh(filt[r] * query_proj[r] + recur[r]) for r in range(p)]

    def gate(name):
        a = matvec(params[f"w_x{name}"], v)
        b = matvec(params[f"w_y{name}"], q)
        c = matvec(params[f"u_{name}"], h_prev)
        return [sigmoid(a[r] + b[r] + c[r] + params[f"b_{name}"][r]) for r in range(p)]

    forget, update, modal, out = gate("f"), gate("i"), gate("m"), gate("o")
    candidate = [modal[r] * clip_path[r] + (1 - modal[r]) * query_path[r] for r in range(p)]
    cell = [forget[r] * c_prev[r] + update[r] * candidate[r] for r in range(p)]
    hidden = [out[r] * math.tanh(cell[r]) for r in range(p)]
    return hidden, cell


def attention_weights_scalar(clip_columns, query, w_clip, w_query, bias, w_score):
    """Per-clip attention weights: tanh joint layer, scored, softmax over clips."""
    k = len(bias)
    query_part = matvec(w_query, query)
    scores = []
    for col in clip_columns:
        clip_part = matvec(w_clip, col)
        hidden = [math.tanh(clip_part[r] + query_part[r] + bias[r]) for r in range(k)]
        scores.append(sum(w_score[r] * hidden[r] for r in range(k)))
    return softmax_scalar(scores)


def conv1d_scalar(inputs, weights, bias):
    """Same-padded stride-1 1D convolution; inputs is channels x length."""
    c_in = len(inputs)
    length = len(inputs[0])
    c_out = len(weights)
    kernel = len(weights[0][0])
    half = kernel // 2
    out = []
    for o in range(c_out):
        row = []
        for t in range(length):
            acc = bias[o]
            for c in range(c_in):
                for j in range(kernel):
                    src = t + j - half
                    if 0 <= src < length:
                        acc += weights[o][c][j] * inputs[c][src]
            row.append(acc)
        out.append(row)
    return out


def interpolate_scalar(columns, l):
    """Linear interpolation of a list of columns onto l evenly spaced positions."""
    t = len(columns)
    d = len(columns[0])
    out = []
    for j in range(l):
        pos = j * (t - 1) / (l - 1)
        left = min(int(math.floor(pos)), t - 2)
        frac = pos - left
        out.append([
            columns[left][r] * (1 - frac) + columns[left + 1][r] * frac
            for r in range(d)
        ])
    return out


def clip_iou_scalar(a_start, a_end, b_start, b_end):
    inter = min(a_end, b_end) - max(a_start, b_start) + 1
    if inter <= 0:
        return 0.0
    union = (a_end - a_start + 1) + (b_end - b_start + 1) - inter
    return inter / union


def iou_map_bruteforce(start_idx, end_idx, l):
    out = [[0.0] * l for _ in range(l)]
    for x in range(l):
        for y in range(x, l):
            out[x][y] = clip_iou_scalar(x, y, start_idx, end_idx)
    return out


def bce_scalar(pred, target, mask, epsilon):
    """Masked mean binary cross-entropy over an l x l grid."""
    total = 0.0
    count = 0
    for x in range(len(pred)):
        for y in range(len(pred[0])):
            if mask[x][y]:
                p = min(max(pred[x][y], epsilon), 1.0 - epsilon)
                total += -(target[x][y] * math.log(p) + (1 - target[x][y]) * math.log(1 - p))
                count += 1
    return total / count


def kl_scalar(pred, target, epsilon):
    """Epsilon-smoothed KL with the prediction renormalized to sum 1."""
    total = sum(pred)
    p = [v / total for v in pred] if total > 0 else [1.0 / len(pred)] * len(pred)
    return sum(p[i] * math.log((p[i] + epsilon) / (target[i] + epsilon)) for i in range(len(p)))


def seconds_iou_scalar(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union > 0:
        return inter / union
    return 1.0 if a == b else 0.0


def recall_bruteforce(ranked_per_query, truths, n, m):
    hits = 0
    for ranked, truth in zip(ranked_per_query, truths):
        best = 0.0
        for pred in list(ranked)[:n]:
            best = max(best, seconds_iou_scalar(pred, truth))
        if best >= m:
            hits += 1
    return hits / len(truths)
