#include "rulopf/matpower.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include <json.hpp>

#include "rulopf/errors.hpp"

namespace rulopf {

namespace {

using Matrix = std::vector<std::vector<double>>;

/// Character scanner over MATLAB-syntax case text, tracking line/column.
class Scanner {
public:
    explicit Scanner(const std::string& text) : text_(text) {}

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return eof() ? '\0' : text_[pos_]; }
    int line() const { return line_; }
    int col() const { return col_; }
    int column() const { return col_; }

    char advance() {
        const char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_comment() {
        while (!eof() && peek() != '\n') advance();
    }

    /// Skips whitespace (optionally stopping at newlines) and % comments.
    void skip_space(bool stop_at_newline) {
        while (!eof()) {
            const char c = peek();
            if (c == '%') {
                skip_comment();
                continue;
            }
            if (c == '\n' && stop_at_newline) return;
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ',') {
                advance();
                continue;
            }
            return;
        }
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, line_, col_);
    }

    std::string identifier() {
        std::string word;
        while (!eof() &&
               (std::isalnum(static_cast<unsigned char>(peek())) ||
                peek() == '_' || peek() == '.')) {
            word += advance();
        }
        if (word.empty()) fail("expected identifier");
        return word;
    }

    double number() {
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        double value = 0;
        const auto [next, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc() || next == begin) fail("expected number");
        for (const char* p = begin; p != next; ++p) advance();
        return value;
    }

    void expect(char c, const char* what) {
        if (eof() || peek() != c) fail(std::string("expected ") + what);
        advance();
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

Matrix parse_matrix(Scanner& s) {
    Matrix rows;
    std::vector<double> row;
    // Finishes the row in progress, rejecting widths that disagree with the
    // first row. Location points at the row's terminator (';', newline, ']').
    const auto close_row = [&](int line, int col) {
        if (row.empty()) return;
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("ragged matrix row (expected " +
                                 std::to_string(rows.front().size()) +
                                 " columns, got " + std::to_string(row.size()) +
                                 ")",
                             line, col);
        rows.push_back(std::move(row));
        row.clear();
    };
    for (;;) {
        s.skip_space(/*stop_at_newline=*/true);
        if (s.eof()) s.fail("unterminated matrix, expected ]");
        const char c = s.peek();
        const int line = s.line();
        const int col = s.col();
        if (c == '\n' || c == ';') {
            s.advance();
            close_row(line, col);
            continue;
        }
        if (c == ']') {
            s.advance();
            close_row(line, col);
            break;
        }
        row.push_back(s.number());
    }
    return rows;
}

struct RawCase {
    std::map<std::string, double> scalars;
    std::map<std::string, Matrix> matrices;
};

RawCase parse_raw(const std::string& text) {
    Scanner s(text);
    RawCase raw;
    for (;;) {
        s.skip_space(false);
        if (s.eof()) break;
        if (!std::isalpha(static_cast<unsigned char>(s.peek())))
            s.fail("expected statement");
        const std::string head = s.identifier();
        if (head == "function") {
            s.skip_comment();  // the remainder of the header line
            continue;
        }
        if (head.rfind("mpc.", 0) != 0)
            s.fail("expected assignment to an mpc field, got '" + head + "'");
        const std::string field = head.substr(4);
        s.skip_space(false);
        s.expect('=', "=");
        s.skip_space(false);
        if (s.peek() == '\'') {
            s.advance();
            while (!s.eof() && s.peek() != '\'') s.advance();
            s.expect('\'', "closing quote");
        } else if (s.peek() == '[') {
            s.advance();
            raw.matrices[field] = parse_matrix(s);
        } else {
            raw.scalars[field] = s.number();
        }
        s.skip_space(false);
        if (!s.eof() && s.peek() == ';') s.advance();
    }
    return raw;
}

const Matrix& require_matrix(const RawCase& raw, const char* name,
                             std::size_t min_cols) {
    const auto it = raw.matrices.find(name);
    if (it == raw.matrices.end())
        throw SchemaError(std::string("missing matrix mpc.") + name);
    if (it->second.empty())
        throw SchemaError(std::string("empty matrix mpc.") + name);
    if (it->second.front().size() < min_cols)
        throw SchemaError(std::string("mpc.") + name + " needs at least " +
                          std::to_string(min_cols) + " columns, got " +
                          std::to_string(it->second.front().size()));
    return it->second;
}

} // namespace

const Bus& NetworkCase::bus_by_id(int id) const {
    return buses[bus_index(id)];
}

std::size_t NetworkCase::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return i;
    throw UnknownBus("bus " + std::to_string(id) + " not in case");
}

void NetworkCase::validate() const {
    const auto require_bus = [this](int id, const char* what) {
        for (const auto& b : buses)
            if (b.id == id) return;
        throw ValidationError(std::string(what) + " references unknown bus " +
                              std::to_string(id));
    };
    if (!(base_mva > 0)) throw ValidationError("base_mva must be positive");
    if (buses.empty()) throw ValidationError("case has no buses");

    std::size_t n_slack = 0;
    for (const auto& b : buses) {
        for (const auto& other : buses)
            if (&b != &other && b.id == other.id)
                throw ValidationError("duplicate bus id " +
                                      std::to_string(b.id));
        if (b.type == BusType::slack) ++n_slack;
        if (!(b.v_min_pu > 0) || !(b.v_max_pu >= b.v_min_pu))
            throw ValidationError("bus " + std::to_string(b.id) +
                                  ": invalid voltage band");
    }
    if (n_slack != 1)
        throw ValidationError("expected exactly one slack bus, found " +
                              std::to_string(n_slack));

    for (const auto& br : branches) {
        require_bus(br.from_bus, "branch");
        require_bus(br.to_bus, "branch");
        if (br.in_service &&
            std::hypot(br.r_pu, br.x_pu) <= 0.0)
            throw ValidationError("in-service branch " +
                                  std::to_string(br.from_bus) + "-" +
                                  std::to_string(br.to_bus) +
                                  " has zero impedance");
        if (br.tap_ratio < 0)
            throw ValidationError("negative tap ratio on branch " +
                                  std::to_string(br.from_bus) + "-" +
                                  std::to_string(br.to_bus));
    }
    for (const auto& g : generators) require_bus(g.bus, "generator");
    if (gencosts.size() != generators.size())
        throw ValidationError("gencost rows (" +
                              std::to_string(gencosts.size()) +
                              ") must align with generator rows (" +
                              std::to_string(generators.size()) + ")");
    for (const auto& d : batteries) {
        require_bus(d.bus, "battery");
        if (d.n_cells < 1)
            throw ValidationError("battery at bus " + std::to_string(d.bus) +
                                  ": n_cells must be >= 1");
    }
}

NetworkCase parse_matpower(const std::string& text) {
    const RawCase raw = parse_raw(text);
    NetworkCase net;
    net.name = "case";

    const auto base_it = raw.scalars.find("baseMVA");
    if (base_it == raw.scalars.end())
        throw SchemaError("missing scalar mpc.baseMVA");
    net.base_mva = base_it->second;

    for (const auto& row : require_matrix(raw, "bus", 13)) {
        Bus b;
        b.id = static_cast<int>(row[0]);
        const int type = static_cast<int>(row[1]);
        if (type < 1 || type > 3)
            throw ValidationError("bus " + std::to_string(b.id) +
                                  ": unknown type " + std::to_string(type));
        b.type = static_cast<BusType>(type);
        b.pd_mw = row[2];
        b.qd_mvar = row[3];
        b.gs_mw = row[4];
        b.bs_mvar = row[5];
        b.area = static_cast<int>(row[6]);
        b.vm_pu = row[7];
        b.va_deg = row[8];
        b.base_kv = row[9];
        b.zone = static_cast<int>(row[10]);
        b.v_max_pu = row[11];
        b.v_min_pu = row[12];
        net.buses.push_back(b);
    }

    for (const auto& row : require_matrix(raw, "branch", 11)) {
        Branch br;
        br.from_bus = static_cast<int>(row[0]);
        br.to_bus = static_cast<int>(row[1]);
        br.r_pu = row[2];
        br.x_pu = row[3];
        br.b_pu = row[4];
        br.rate_a_mva = row[5];
        br.rate_b_mva = row[6];
        br.rate_c_mva = row[7];
        br.tap_ratio = row[8];
        br.phase_shift_deg = row[9];
        br.in_service = row[10] != 0;
        if (row.size() >= 13) {
            br.ang_min_deg = row[11];
            br.ang_max_deg = row[12];
        }
        net.branches.push_back(br);
    }

    for (const auto& row : require_matrix(raw, "gen", 10)) {
        Generator g;
        g.bus = static_cast<int>(row[0]);
        g.pg_mw = row[1];
        g.qg_mvar = row[2];
        g.q_max_mvar = row[3];
        g.q_min_mvar = row[4];
        g.vg_pu = row[5];
        g.mbase_mva = row[6];
        g.in_service = row[7] != 0;
        g.p_max_mw = row[8];
        g.p_min_mw = row[9];
        net.generators.push_back(g);
    }

    for (const auto& row : require_matrix(raw, "gencost", 4)) {
        GenCost c;
        c.model = static_cast<int>(row[0]);
        if (c.model != 2)
            throw SchemaError("unsupported cost model " +
                              std::to_string(c.model) +
                              " (only polynomial model 2)");
        c.startup = row[1];
        c.shutdown = row[2];
        const int ncost = static_cast<int>(row[3]);
        if (ncost < 1 || row.size() < 4 + static_cast<std::size_t>(ncost))
            throw SchemaError("gencost row has fewer coefficients than ncost");
        c.coeffs.assign(row.begin() + 4, row.begin() + 4 + ncost);
        net.gencosts.push_back(c);
    }

    net.validate();
    return net;
}

NetworkCase attach_batteries(const NetworkCase& net,
                             const std::vector<BatteryDevice>& devices) {
    NetworkCase out = net;
    for (const auto& d : devices) {
        const std::size_t bi = out.bus_index(d.bus);  // throws UnknownBus
        if (d.has_box) {
            out.buses[bi].v_max_pu =
                std::min(out.buses[bi].v_max_pu, d.constraints.v_bus_max_pu);
        }
        out.batteries.push_back(d);
    }
    out.validate();
    return out;
}

namespace {

nlohmann::json battery_json(const BatteryDevice& d) {
    return nlohmann::json{
        {"bus", d.bus},
        {"n_cells", d.n_cells},
        {"initial_efc", d.initial_efc},
        {"hi", d.hi},
        {"p_charge_max_kw", d.constraints.p_charge_max_kw},
        {"p_discharge_max_kw", d.constraints.p_discharge_max_kw},
        {"v_bus_max_pu", d.constraints.v_bus_max_pu},
        {"i_charge_max_a", d.i_charge_max_a},
        {"i_discharge_max_a", d.i_discharge_max_a},
        {"soc_min", d.soc_min},
        {"soc_max", d.soc_max},
        {"has_box", d.has_box},
        {"p_b_kw", d.p_b_kw}};
}

BatteryDevice battery_from(const nlohmann::json& j) {
    BatteryDevice d;
    d.bus = j.at("bus").get<int>();
    d.n_cells = j.at("n_cells").get<std::size_t>();
    d.initial_efc = j.at("initial_efc").get<double>();
    d.hi = j.at("hi").get<double>();
    d.constraints.p_charge_max_kw = j.at("p_charge_max_kw").get<double>();
    d.constraints.p_discharge_max_kw = j.at("p_discharge_max_kw").get<double>();
    d.constraints.v_bus_max_pu = j.at("v_bus_max_pu").get<double>();
    d.i_charge_max_a = j.at("i_charge_max_a").get<double>();
    d.i_discharge_max_a = j.at("i_discharge_max_a").get<double>();
    d.soc_min = j.at("soc_min").get<double>();
    d.soc_max = j.at("soc_max").get<double>();
    d.has_box = j.at("has_box").get<bool>();
    d.p_b_kw = j.at("p_b_kw").get<double>();
    return d;
}

} // namespace

std::string case_to_json(const NetworkCase& net) {
    nlohmann::json j;
    j["name"] = net.name;
    j["base_mva"] = net.base_mva;
    j["buses"] = nlohmann::json::array();
    for (const auto& b : net.buses) {
        j["buses"].push_back({{"id", b.id},
                              {"type", static_cast<int>(b.type)},
                              {"pd_mw", b.pd_mw},
                              {"qd_mvar", b.qd_mvar},
                              {"gs_mw", b.gs_mw},
                              {"bs_mvar", b.bs_mvar},
                              {"area", b.area},
                              {"vm_pu", b.vm_pu},
                              {"va_deg", b.va_deg},
                              {"base_kv", b.base_kv},
                              {"zone", b.zone},
                              {"v_max_pu", b.v_max_pu},
                              {"v_min_pu", b.v_min_pu}});
    }
    j["branches"] = nlohmann::json::array();
    for (const auto& br : net.branches) {
        j["branches"].push_back({{"from_bus", br.from_bus},
                                 {"to_bus", br.to_bus},
                                 {"r_pu", br.r_pu},
                                 {"x_pu", br.x_pu},
                                 {"b_pu", br.b_pu},
                                 {"rate_a_mva", br.rate_a_mva},
                                 {"rate_b_mva", br.rate_b_mva},
                                 {"rate_c_mva", br.rate_c_mva},
                                 {"tap_ratio", br.tap_ratio},
                                 {"phase_shift_deg", br.phase_shift_deg},
                                 {"in_service", br.in_service},
                                 {"ang_min_deg", br.ang_min_deg},
                                 {"ang_max_deg", br.ang_max_deg}});
    }
    j["generators"] = nlohmann::json::array();
    for (const auto& g : net.generators) {
        j["generators"].push_back({{"bus", g.bus},
                                   {"pg_mw", g.pg_mw},
                                   {"qg_mvar", g.qg_mvar},
                                   {"q_max_mvar", g.q_max_mvar},
                                   {"q_min_mvar", g.q_min_mvar},
                                   {"vg_pu", g.vg_pu},
                                   {"mbase_mva", g.mbase_mva},
                                   {"in_service", g.in_service},
                                   {"p_max_mw", g.p_max_mw},
                                   {"p_min_mw", g.p_min_mw}});
    }
    j["gencosts"] = nlohmann::json::array();
    for (const auto& c : net.gencosts) {
        j["gencosts"].push_back({{"model", c.model},
                                 {"startup", c.startup},
                                 {"shutdown", c.shutdown},
                                 {"coeffs", c.coeffs}});
    }
    j["batteries"] = nlohmann::json::array();
    for (const auto& d : net.batteries) j["batteries"].push_back(battery_json(d));
    return j.dump(2);
}

NetworkCase case_from_json(const std::string& text) {
    NetworkCase net;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        net.name = j.at("name").get<std::string>();
        net.base_mva = j.at("base_mva").get<double>();
        for (const auto& jb : j.at("buses")) {
            Bus b;
            b.id = jb.at("id").get<int>();
            b.type = static_cast<BusType>(jb.at("type").get<int>());
            b.pd_mw = jb.at("pd_mw").get<double>();
            b.qd_mvar = jb.at("qd_mvar").get<double>();
            b.gs_mw = jb.at("gs_mw").get<double>();
            b.bs_mvar = jb.at("bs_mvar").get<double>();
            b.area = jb.at("area").get<int>();
            b.vm_pu = jb.at("vm_pu").get<double>();
            b.va_deg = jb.at("va_deg").get<double>();
            b.base_kv = jb.at("base_kv").get<double>();
            b.zone = jb.at("zone").get<int>();
            b.v_max_pu = jb.at("v_max_pu").get<double>();
            b.v_min_pu = jb.at("v_min_pu").get<double>();
            net.buses.push_back(b);
        }
        for (const auto& jb : j.at("branches")) {
            Branch br;
            br.from_bus = jb.at("from_bus").get<int>();
            br.to_bus = jb.at("to_bus").get<int>();
            br.r_pu = jb.at("r_pu").get<double>();
            br.x_pu = jb.at("x_pu").get<double>();
            br.b_pu = jb.at("b_pu").get<double>();
            br.rate_a_mva = jb.at("rate_a_mva").get<double>();
            br.rate_b_mva = jb.at("rate_b_mva").get<double>();
            br.rate_c_mva = jb.at("rate_c_mva").get<double>();
            br.tap_ratio = jb.at("tap_ratio").get<double>();
            br.phase_shift_deg = jb.at("phase_shift_deg").get<double>();
            br.in_service = jb.at("in_service").get<bool>();
            br.ang_min_deg = jb.at("ang_min_deg").get<double>();
            br.ang_max_deg = jb.at("ang_max_deg").get<double>();
            net.branches.push_back(br);
        }
        for (const auto& jg : j.at("generators")) {
            Generator g;
            g.bus = jg.at("bus").get<int>();
            g.pg_mw = jg.at("pg_mw").get<double>();
            g.qg_mvar = jg.at("qg_mvar").get<double>();
            g.q_max_mvar = jg.at("q_max_mvar").get<double>();
            g.q_min_mvar = jg.at("q_min_mvar").get<double>();
            g.vg_pu = jg.at("vg_pu").get<double>();
            g.mbase_mva = jg.at("mbase_mva").get<double>();
            g.in_service = jg.at("in_service").get<bool>();
            g.p_max_mw = jg.at("p_max_mw").get<double>();
            g.p_min_mw = jg.at("p_min_mw").get<double>();
            net.generators.push_back(g);
        }
        for (const auto& jc : j.at("gencosts")) {
            GenCost c;
            c.model = jc.at("model").get<int>();
            c.startup = jc.at("startup").get<double>();
            c.shutdown = jc.at("shutdown").get<double>();
            c.coeffs = jc.at("coeffs").get<std::vector<double>>();
            net.gencosts.push_back(c);
        }
        for (const auto& jd : j.at("batteries"))
            net.batteries.push_back(battery_from(jd));
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad case JSON: ") + e.what());
    }
    net.validate();
    return net;
}

} // namespace rulopf
