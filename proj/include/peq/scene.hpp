#pragma once

#include "peq/expr.hpp"
#include "peq/geometry.hpp"
#include "peq/quantization.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace peq {

/// Raised for structural problems in a scene description (missing keys, bad
/// index lists, malformed expressions).  A critical weight shift raises
/// CriticalDelta instead, so callers can distinguish the two.
class SceneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A self-contained evaluation request: one chart with a connection, the
/// operator weights, a symbol, a density, and the points to evaluate at.
struct Scene {
    Chart chart;
    ChartConnection connection;
    QuantizationParams params;
    SymbolField symbol;
    DensityField density;
    std::vector<std::vector<double>> points;
};

namespace detail {

inline Rational rational_from_json(const nlohmann::json& j, const std::string& what) {
    try {
        if (j.is_string()) return parse_rational(j.get<std::string>());
        if (j.is_number_integer()) return Rational(j.get<long long>());
        if (j.is_number_float()) return parse_rational(j.dump());
    } catch (const std::exception& e) {
        throw SceneError(what + ": " + e.what());
    }
    throw SceneError(what + " must be a number or a rational string like \"1/2\"");
}

/// Parses a comma-separated list of one-based indices ("1,2,2") into
/// zero-based values, preserving order.
inline std::vector<int> parse_index_list(const std::string& text, int dim, const std::string& what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto first = item.find_first_not_of(" \t");
        const auto last = item.find_last_not_of(" \t");
        if (first == std::string::npos)
            throw SceneError(what + ": empty entry in index list \"" + text + "\"");
        int v = 0;
        try {
            std::size_t used = 0;
            v = std::stoi(item.substr(first, last - first + 1), &used);
            if (used != last - first + 1) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw SceneError(what + ": \"" + item + "\" is not an index in \"" + text + "\"");
        }
        if (v < 1 || v > dim)
            throw SceneError(what + ": index " + std::to_string(v) + " outside 1.." + std::to_string(dim));
        out.push_back(v - 1);
    }
    return out;
}

inline Expression expression_from_json(const nlohmann::json& j, const Chart& chart,
                                       const std::string& what) {
    if (!j.is_string()) throw SceneError(what + " must be an expression string");
    const std::string source = j.get<std::string>();
    try {
        return parse(source, chart);
    } catch (const ParseError& e) {
        throw SceneError(what + ": " + e.what() + " at offset " + std::to_string(e.offset()) +
                         " in \"" + source + "\"");
    }
}

inline Scene parse_scene_impl(const nlohmann::json& root) {
    if (!root.is_object()) throw SceneError("scene must be a JSON object");

    const auto& jc = root.at("chart");
    const int dim = jc.at("dim").get<int>();
    if (dim < 2 || dim > 7) throw SceneError("chart.dim must be between 2 and 7");
    std::vector<std::string> coords = jc.at("coords").get<std::vector<std::string>>();
    if (static_cast<int>(coords.size()) != dim)
        throw SceneError("chart.coords must list exactly chart.dim names");
    Chart chart(std::move(coords));

    const Rational lambda = rational_from_json(root.at("lambda"), "lambda");
    const Rational mu = rational_from_json(root.at("mu"), "mu");

    const auto& js = root.at("symbol");
    const int degree = js.at("degree").get<int>();
    if (degree < 0 || degree > 6) throw SceneError("symbol.degree must be between 0 and 6");
    SymbolField symbol(dim, degree, mu - lambda);
    for (const auto& [key, value] : js.at("components").items()) {
        std::vector<int> idx = parse_index_list(key, dim, "symbol component \"" + key + "\"");
        if (static_cast<int>(idx.size()) != degree)
            throw SceneError("symbol component \"" + key + "\" must carry " +
                             std::to_string(degree) + " indices");
        try {
            symbol.set_component(std::move(idx),
                                 expression_from_json(value, chart, "symbol component \"" + key + "\""));
        } catch (const std::invalid_argument& e) {
            throw SceneError("symbol component \"" + key + "\": " + e.what());
        }
    }

    DensityField density{lambda, expression_from_json(root.at("density"), chart, "density")};

    ChartConnection connection(chart);
    if (root.contains("connection")) {
        for (const auto& [key, value] : root.at("connection").items()) {
            const std::vector<int> idx =
                parse_index_list(key, dim, "connection coefficient \"" + key + "\"");
            if (idx.size() != 3)
                throw SceneError("connection key \"" + key + "\" must be \"k,i,j\"");
            try {
                connection.set(idx[0], idx[1], idx[2],
                               expression_from_json(value, chart, "connection coefficient \"" + key + "\""));
            } catch (const std::invalid_argument& e) {
                throw SceneError("connection coefficient \"" + key + "\": " + e.what());
            }
        }
    }

    QuantizationParams params{dim, degree, lambda, mu};
    require_noncritical(params.m, params.delta());

    std::vector<std::vector<double>> points;
    for (const auto& jp : root.at("points")) {
        std::vector<double> p = jp.get<std::vector<double>>();
        if (static_cast<int>(p.size()) != dim)
            throw SceneError("each point must have chart.dim coordinates");
        points.push_back(std::move(p));
    }
    if (points.empty()) throw SceneError("points must contain at least one point");

    return Scene{std::move(chart), std::move(connection), std::move(params),
                 std::move(symbol), std::move(density), std::move(points)};
}

} // namespace detail

/// Builds a scene from parsed JSON.  Schema violations raise SceneError;
/// a critical weight shift raises CriticalDelta.
inline Scene parse_scene(const nlohmann::json& root) {
    try {
        return detail::parse_scene_impl(root);
    } catch (const nlohmann::json::exception& e) {
        throw SceneError(std::string("scene schema: ") + e.what());
    }
}

inline Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SceneError("cannot open scene file: " + path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw SceneError("invalid JSON in " + path + ": " + e.what());
    }
    return parse_scene(root);
}

} // namespace peq
