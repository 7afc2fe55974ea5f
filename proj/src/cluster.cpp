#include "tracemind/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tracemind {

namespace {

// Distances of 0 map to a huge finite lambda instead of infinity so that
// stability sums stay well-defined on duplicate points.
constexpr double kLambdaFloor = 1e-12;

double to_lambda(double dist) { return 1.0 / std::max(dist, kLambdaFloor); }

struct DendroNode {
    int left = -1, right = -1;  // node ids; < n are leaves
    double dist = 0;
    int size = 1;
};

struct Edge {
    double w;
    int a, b;  // a < b
    bool operator<(const Edge& o) const {
        if (w != o.w) return w < o.w;
        if (a != o.a) return a < o.a;
        return b < o.b;
    }
};

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

struct CondensedCluster {
    double birth_lambda = 0;
    std::vector<std::pair<int, double>> points;  // (point, lambda at which it leaves)
    std::vector<int> children;
    double stability = 0;
};

void collect_leaves(const std::vector<DendroNode>& nodes, int n, int v, std::vector<int>& out) {
    if (v < n) {
        out.push_back(v);
        return;
    }
    collect_leaves(nodes, n, nodes[v].left, out);
    collect_leaves(nodes, n, nodes[v].right, out);
}

// Walks the single-linkage dendrogram, shedding small side branches as noise
// and splitting when both children reach min_cluster_size.
void condense(const std::vector<DendroNode>& nodes, int n, int mcs, int start_node,
              double birth_lambda, std::vector<CondensedCluster>& clusters, int cluster_id) {
    clusters[cluster_id].birth_lambda = birth_lambda;
    int v = start_node;
    while (true) {
        if (v < n) {
            clusters[cluster_id].points.emplace_back(v, to_lambda(0.0));
            return;
        }
        const auto& node = nodes[v];
        double lam = to_lambda(node.dist);
        int sl = node.left < n ? 1 : nodes[node.left].size;
        int sr = node.right < n ? 1 : nodes[node.right].size;
        if (sl >= mcs && sr >= mcs) {
            std::vector<int> pts;
            collect_leaves(nodes, n, v, pts);
            for (int p : pts) clusters[cluster_id].points.emplace_back(p, lam);
            int a = static_cast<int>(clusters.size());
            clusters.emplace_back();
            int b = static_cast<int>(clusters.size());
            clusters.emplace_back();
            clusters[cluster_id].children = {a, b};
            condense(nodes, n, mcs, node.left, lam, clusters, a);
            condense(nodes, n, mcs, node.right, lam, clusters, b);
            return;
        }
        if (sl >= mcs) {
            std::vector<int> pts;
            collect_leaves(nodes, n, node.right, pts);
            for (int p : pts) clusters[cluster_id].points.emplace_back(p, lam);
            v = node.left;
            continue;
        }
        if (sr >= mcs) {
            std::vector<int> pts;
            collect_leaves(nodes, n, node.left, pts);
            for (int p : pts) clusters[cluster_id].points.emplace_back(p, lam);
            v = node.right;
            continue;
        }
        std::vector<int> pts;
        collect_leaves(nodes, n, v, pts);
        for (int p : pts) clusters[cluster_id].points.emplace_back(p, lam);
        return;
    }
}

struct Selection {
    double value = 0;
    std::vector<int> chosen;
};

Selection select_clusters(const std::vector<CondensedCluster>& clusters, int id) {
    const auto& c = clusters[id];
    if (c.children.empty()) return {c.stability, {id}};
    Selection merged;
    for (int ch : c.children) {
        Selection s = select_clusters(clusters, ch);
        merged.value += s.value;
        merged.chosen.insert(merged.chosen.end(), s.chosen.begin(), s.chosen.end());
    }
    if (c.stability >= merged.value) return {c.stability, {id}};
    return merged;
}

}  // namespace

void ClusterParams::validate() const {
    if (min_cluster_size < 2) fail(ErrorClass::precondition, "min_cluster_size must be >= 2");
    if (min_samples < 1) fail(ErrorClass::precondition, "min_samples must be >= 1");
}

int ClusterResult::num_clusters() const {
    int mx = -1;
    for (int l : labels) mx = std::max(mx, l);
    return mx + 1;
}

ClusterResult hdbscan(const std::vector<Vec>& points, const ClusterParams& params) {
    params.validate();
    int n = static_cast<int>(points.size());
    if (n == 0) fail(ErrorClass::precondition, "hdbscan needs at least one point");
    for (const auto& p : points)
        if (!all_finite(p)) fail(ErrorClass::validation, "non-finite coordinates");

    ClusterResult result;
    result.params = params;
    result.labels.assign(n, kNoise);
    if (n < params.min_cluster_size) return result;

    // Pairwise distances and core distances (min_samples-th nearest, self
    // included, so min_samples=1 keeps plain distances).
    Mat dist(n, n);
    for (int i = 0; i < n; ++i) {
        dist(i, i) = 0;
        for (int j = i + 1; j < n; ++j) {
            double d = (points[i] - points[j]).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    int k = std::min(params.min_samples, n);
    std::vector<double> core(n);
    for (int i = 0; i < n; ++i) {
        std::vector<double> row(n);
        for (int j = 0; j < n; ++j) row[j] = dist(i, j);
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
        core[i] = row[k - 1];
    }

    std::vector<Edge> edges;
    edges.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            edges.push_back({std::max({core[i], core[j], dist(i, j)}), i, j});
    std::sort(edges.begin(), edges.end());

    // Kruskal; the sorted pass doubles as the single-linkage merge order.
    std::vector<DendroNode> nodes(n);
    std::vector<int> comp_node(n);
    std::iota(comp_node.begin(), comp_node.end(), 0);
    UnionFind uf(n);
    for (const auto& e : edges) {
        int ra = uf.find(e.a), rb = uf.find(e.b);
        if (ra == rb) continue;
        DendroNode merged;
        merged.left = comp_node[ra];
        merged.right = comp_node[rb];
        merged.dist = e.w;
        merged.size = (merged.left < n ? 1 : nodes[merged.left].size) +
                      (merged.right < n ? 1 : nodes[merged.right].size);
        nodes.push_back(merged);
        uf.unite(ra, rb);
        comp_node[uf.find(ra)] = static_cast<int>(nodes.size()) - 1;
    }
    int root = static_cast<int>(nodes.size()) - 1;

    std::vector<CondensedCluster> clusters;
    clusters.emplace_back();
    condense(nodes, n, params.min_cluster_size, root, 0.0, clusters, 0);
    for (auto& c : clusters) {
        c.stability = 0;
        for (const auto& [p, lam] : c.points) c.stability += lam - c.birth_lambda;
    }

    Selection sel;
    if (!params.allow_single_cluster && !clusters[0].children.empty()) {
        for (int ch : clusters[0].children) {
            Selection s = select_clusters(clusters, ch);
            sel.chosen.insert(sel.chosen.end(), s.chosen.begin(), s.chosen.end());
        }
    } else {
        sel = select_clusters(clusters, 0);
    }

    // A point belongs to the deepest selected cluster on its containment
    // chain; points that spilled out above every selected cluster are noise.
    std::vector<char> is_selected(clusters.size(), 0);
    for (int id : sel.chosen) is_selected[id] = 1;
    std::vector<int> depth(clusters.size(), 0);
    for (size_t c = 0; c < clusters.size(); ++c)
        for (int ch : clusters[c].children) depth[ch] = depth[c] + 1;
    std::vector<int> best_cluster(n, -1), best_depth(n, -1);
    for (size_t c = 0; c < clusters.size(); ++c) {
        if (!is_selected[c]) continue;
        for (const auto& [p, lam] : clusters[c].points) {
            if (depth[c] > best_depth[p]) {
                best_depth[p] = depth[c];
                best_cluster[p] = static_cast<int>(c);
            }
        }
    }

    // Dense ids ordered by first member.
    std::map<int, int> relabel;
    for (int p = 0; p < n; ++p) {
        if (best_cluster[p] < 0) continue;
        if (!relabel.count(best_cluster[p])) {
            int next = static_cast<int>(relabel.size());
            relabel[best_cluster[p]] = next;
        }
        result.labels[p] = relabel[best_cluster[p]];
    }
    for (const auto& [cid, lab] : relabel) result.stabilities[lab] = clusters[cid].stability;
    return result;
}

// --- hierarchy ----------------------------------------------------------------

const SubGroup* IntentHierarchy::find_sg(int sg_id) const {
    for (const auto& g : groups)
        for (const auto& sg : g.subgroups)
            if (sg.id == sg_id) return &sg;
    return nullptr;
}

const IntentGroup* IntentHierarchy::find_ig(int ig_id) const {
    for (const auto& g : groups)
        if (g.id == ig_id) return &g;
    return nullptr;
}

int IntentHierarchy::sg_count() const {
    int c = 0;
    for (const auto& g : groups) c += static_cast<int>(g.subgroups.size());
    return c;
}

HierarchyConfig hierarchy_config_from_json(const json& j) {
    HierarchyConfig cfg;
    cfg.ig.min_cluster_size = j.value("min_cluster_size", 2);
    cfg.ig.min_samples = j.value("min_samples", 1);
    cfg.sg = cfg.ig;
    if (j.contains("sg_min_cluster_size")) cfg.sg.min_cluster_size = j.at("sg_min_cluster_size");
    cfg.rep_k = j.value("rep_k", 5);
    auto fusion_of = [&](const char* key) -> std::optional<std::array<double, 3>> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        const auto& f = j.at(key);
        return {{f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()}};
    };
    cfg.ig_fusion = fusion_of("ig_fusion");
    cfg.sg_fusion = fusion_of("sg_fusion");
    return cfg;
}

namespace {

Vec mean_of(const std::vector<const Vec*>& vs) {
    Vec m = Vec::Zero(vs[0]->size());
    for (const Vec* v : vs) m += *v;
    return m / static_cast<double>(vs.size());
}

std::vector<std::string> nearest_members(const std::vector<std::pair<std::string, const Vec*>>& members,
                                         const Vec& centroid, int k) {
    std::vector<std::pair<double, std::string>> order;
    order.reserve(members.size());
    for (const auto& [id, v] : members) order.emplace_back((*v - centroid).norm(), id);
    std::sort(order.begin(), order.end());
    std::vector<std::string> out;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i)
        out.push_back(order[i].second);
    return out;
}

}  // namespace

IntentHierarchy build_hierarchy(const std::vector<HierarchyInput>& units,
                                const HierarchyConfig& cfg) {
    int n = static_cast<int>(units.size());
    if (n < cfg.ig.min_cluster_size)
        fail(ErrorClass::precondition, "need at least min_cluster_size units to build a hierarchy");
    IntentHierarchy h;
    h.dim = static_cast<int>(units[0].z.size());

    auto reweighted = [&](int i, const std::array<double, 3>& w) -> Vec {
        const auto& pv = *units[i].per_view;
        return w[0] * pv[0] + w[1] * pv[1] + w[2] * pv[2];
    };
    std::vector<Vec> pass1(n);
    for (int i = 0; i < n; ++i)
        pass1[i] = (cfg.ig_fusion && units[i].per_view) ? reweighted(i, *cfg.ig_fusion)
                                                        : units[i].z;
    ClusterResult ig_res = hdbscan(pass1, cfg.ig);

    std::map<int, std::vector<int>> ig_members;  // label -> original indices
    std::vector<int> ig_noise;
    for (int i = 0; i < n; ++i) {
        if (ig_res.labels[i] == kNoise)
            ig_noise.push_back(i);
        else
            ig_members[ig_res.labels[i]].push_back(i);
    }

    // Group order: by first member index; the reserved unassigned group last.
    std::vector<std::vector<int>> ordered;
    for (auto& [label, idxs] : ig_members) ordered.push_back(idxs);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    int next_sg_id = 0;
    auto make_sg = [&](const std::vector<int>& idxs) {
        SubGroup sg;
        sg.id = next_sg_id++;
        std::vector<const Vec*> zs;
        std::vector<std::pair<std::string, const Vec*>> members;
        for (int i : idxs) {
            sg.member_ids.push_back(units[i].id);
            zs.push_back(&units[i].z);
            members.emplace_back(units[i].id, &units[i].z);
        }
        sg.centroid = mean_of(zs);
        sg.support = static_cast<int>(idxs.size());
        sg.representative_ids = nearest_members(members, sg.centroid, cfg.rep_k);
        return sg;
    };

    auto second_pass_point = [&](int i) -> Vec {
        if (cfg.sg_fusion && units[i].per_view) return reweighted(i, *cfg.sg_fusion);
        return units[i].z;
    };

    for (size_t gi = 0; gi < ordered.size(); ++gi) {
        const auto& idxs = ordered[gi];
        IntentGroup ig;
        ig.id = static_cast<int>(gi);
        std::vector<const Vec*> zs;
        for (int i : idxs) {
            ig.member_ids.push_back(units[i].id);
            zs.push_back(&units[i].z);
        }
        ig.centroid = mean_of(zs);

        if (static_cast<int>(idxs.size()) >= cfg.sg.min_cluster_size) {
            std::vector<Vec> pts;
            pts.reserve(idxs.size());
            for (int i : idxs) pts.push_back(second_pass_point(i));
            ClusterResult sg_res = hdbscan(pts, cfg.sg);
            std::map<int, std::vector<int>> sg_members;
            std::vector<int> sg_noise;
            for (size_t j = 0; j < idxs.size(); ++j) {
                if (sg_res.labels[j] == kNoise)
                    sg_noise.push_back(idxs[j]);
                else
                    sg_members[sg_res.labels[j]].push_back(idxs[j]);
            }
            std::vector<std::vector<int>> sg_ordered;
            for (auto& [label, m] : sg_members) sg_ordered.push_back(m);
            std::sort(sg_ordered.begin(), sg_ordered.end(),
                      [](const auto& a, const auto& b) { return a.front() < b.front(); });
            for (const auto& m : sg_ordered) ig.subgroups.push_back(make_sg(m));
            for (int i : sg_noise) ig.subgroups.push_back(make_sg({i}));
        } else {
            for (int i : idxs) ig.subgroups.push_back(make_sg({i}));
        }
        h.groups.push_back(std::move(ig));
    }

    if (!ig_noise.empty()) {
        IntentGroup ig;
        ig.id = static_cast<int>(h.groups.size());
        ig.unassigned = true;
        std::vector<const Vec*> zs;
        for (int i : ig_noise) {
            ig.member_ids.push_back(units[i].id);
            zs.push_back(&units[i].z);
        }
        ig.centroid = mean_of(zs);
        for (int i : ig_noise) ig.subgroups.push_back(make_sg({i}));
        h.groups.push_back(std::move(ig));
    }
    return h;
}

json hierarchy_to_json(const IntentHierarchy& h) {
    json groups = json::array();
    for (const auto& g : h.groups) {
        json jg;
        jg["id"] = g.id;
        jg["unassigned"] = g.unassigned;
        jg["members"] = g.member_ids;
        jg["centroid"] = vec_to_json(g.centroid);
        json sgs = json::array();
        for (const auto& sg : g.subgroups) {
            json js;
            js["id"] = sg.id;
            js["members"] = sg.member_ids;
            js["centroid"] = vec_to_json(sg.centroid);
            js["support"] = sg.support;
            js["representatives"] = sg.representative_ids;
            json hints = json::array();
            for (const auto& hint : sg.hints) hints.push_back(skill_hint_to_json(hint));
            js["hints"] = std::move(hints);
            sgs.push_back(std::move(js));
        }
        jg["subgroups"] = std::move(sgs);
        groups.push_back(std::move(jg));
    }
    json j;
    j["dim"] = h.dim;
    j["groups"] = std::move(groups);
    return j;
}

IntentHierarchy hierarchy_from_json(const json& j) {
    IntentHierarchy h;
    h.dim = j.at("dim").get<int>();
    for (const auto& jg : j.at("groups")) {
        IntentGroup g;
        g.id = jg.at("id").get<int>();
        g.unassigned = jg.value("unassigned", false);
        g.member_ids = jg.at("members").get<std::vector<std::string>>();
        g.centroid = vec_from_json(jg.at("centroid"));
        for (const auto& js : jg.at("subgroups")) {
            SubGroup sg;
            sg.id = js.at("id").get<int>();
            sg.member_ids = js.at("members").get<std::vector<std::string>>();
            sg.centroid = vec_from_json(js.at("centroid"));
            sg.support = js.at("support").get<int>();
            sg.representative_ids = js.at("representatives").get<std::vector<std::string>>();
            for (const auto& jh : js.at("hints")) sg.hints.push_back(skill_hint_from_json(jh));
            g.subgroups.push_back(std::move(sg));
        }
        h.groups.push_back(std::move(g));
    }
    return h;
}

// --- metrics -------------------------------------------------------------------

SeparationReport separation_metrics(const IntentHierarchy& h,
                                    const std::map<std::string, Vec>& embeddings) {
    SeparationReport rep;
    std::vector<const SubGroup*> all;
    for (const auto& g : h.groups)
        for (const auto& sg : g.subgroups) all.push_back(&sg);
    if (all.size() < 2) {
        rep.status = SeparationStatus::insufficient_subgroups;
        rep.note = "separation needs at least two subgroups";
        return rep;
    }
    auto lookup = [&](const std::string& id) -> const Vec& {
        auto it = embeddings.find(id);
        if (it == embeddings.end())
            fail(ErrorClass::not_found, "no embedding for unit " + id);
        return it->second;
    };
    bool degenerate = false;
    std::string note;
    for (const SubGroup* sg : all) {
        if (sg->member_ids.size() < 2) continue;
        SeparationRow row;
        row.sg_id = sg->id;
        row.size = static_cast<int>(sg->member_ids.size());
        double intra = 0;
        for (const auto& id : sg->member_ids) intra += (lookup(id) - sg->centroid).norm();
        row.intra = intra / row.size;
        double inter = std::numeric_limits<double>::infinity();
        for (const SubGroup* other : all)
            if (other != sg) inter = std::min(inter, (sg->centroid - other->centroid).norm());
        row.inter = inter;
        if (row.inter == 0 || row.intra == 0) {
            degenerate = true;
            note = "subgroup " + std::to_string(sg->id) +
                   (row.inter == 0 ? " has zero inter-centroid distance"
                                   : " has zero intra distance");
        }
        rep.rows.push_back(row);
    }
    if (rep.rows.empty()) {
        rep.status = SeparationStatus::insufficient_subgroups;
        rep.note = "no subgroups with at least two members";
        return rep;
    }
    if (degenerate) {
        rep.status = SeparationStatus::degenerate;
        rep.note = note;
        return rep;
    }
    double num = 0, den = 0;
    for (const auto& r : rep.rows) {
        num += r.size * (r.inter / r.intra);
        den += r.size;
    }
    rep.sep_w = num / den;
    return rep;
}

PurityReport purity_metrics(
    const IntentHierarchy& h,
    const std::map<std::string, std::pair<std::string, std::string>>& tags) {
    PurityReport rep;
    for (const auto& g : h.groups)
        for (const auto& sg : g.subgroups) {
            PurityRow row;
            row.sg_id = sg.id;
            row.size = static_cast<int>(sg.member_ids.size());
            std::map<std::string, int> env_counts, act_counts;
            for (const auto& id : sg.member_ids) {
                auto it = tags.find(id);
                if (it == tags.end()) fail(ErrorClass::not_found, "no tags for unit " + id);
                env_counts[it->second.first]++;
                act_counts[it->second.second]++;
            }
            auto majority = [](const std::map<std::string, int>& counts) {
                int best = 0;
                for (const auto& [_, c] : counts) best = std::max(best, c);
                return best;
            };
            row.env_purity = static_cast<double>(majority(env_counts)) / row.size;
            row.act_purity = static_cast<double>(majority(act_counts)) / row.size;
            rep.rows.push_back(row);
        }
    if (rep.rows.empty()) fail(ErrorClass::precondition, "purity needs at least one subgroup");
    double n = static_cast<double>(rep.rows.size());
    for (const auto& r : rep.rows) {
        rep.env_mean += r.env_purity / n;
        rep.act_mean += r.act_purity / n;
    }
    for (const auto& r : rep.rows) {
        rep.env_std += (r.env_purity - rep.env_mean) * (r.env_purity - rep.env_mean) / n;
        rep.act_std += (r.act_purity - rep.act_mean) * (r.act_purity - rep.act_mean) / n;
    }
    rep.env_std = std::sqrt(rep.env_std);
    rep.act_std = std::sqrt(rep.act_std);
    return rep;
}

}  // namespace tracemind
