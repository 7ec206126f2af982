#include "npull/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "npull/error.hpp"
#include "npull/hash.hpp"

namespace npull
{
    namespace
    {
        struct Value
        {
            enum class Kind
            {
                string,
                integer,
                floating,
                boolean,
            };
            Kind kind = Kind::string;
            std::string text;  // unescaped string, or the literal for numbers
            bool flag = false;
        };

        const char* kind_name(Value::Kind k)
        {
            switch (k) {
            case Value::Kind::string: return "a string";
            case Value::Kind::integer: return "an integer";
            case Value::Kind::floating: return "a float";
            case Value::Kind::boolean: return "a boolean";
            }
            return "?";
        }

        [[noreturn]] void fail(std::size_t line, const std::string& what)
        {
            throw ParseError(line ? fmt::format("line {}: {}", line, what) : what, line);
        }

        std::string_view trim(std::string_view s)
        {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string_view::npos) return {};
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        bool is_key_char(char c)
        {
            return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
        }

        /// Parses a value and returns the rest of the line after it.
        Value parse_value(std::string_view s, std::size_t line, std::string_view* rest)
        {
            Value v;
            if (s.empty()) fail(line, "missing value");
            if (s.front() == '"') {
                v.kind = Value::Kind::string;
                std::size_t i = 1;
                for (; i < s.size() && s[i] != '"'; ++i) {
                    if (s[i] != '\\') {
                        v.text += s[i];
                        continue;
                    }
                    if (++i == s.size()) break;
                    switch (s[i]) {
                    case '"': v.text += '"'; break;
                    case '\\': v.text += '\\'; break;
                    case 'n': v.text += '\n'; break;
                    case 't': v.text += '\t'; break;
                    default: fail(line, fmt::format("unsupported escape '\\{}'", s[i]));
                    }
                }
                if (i >= s.size()) fail(line, "unterminated string");
                *rest = s.substr(i + 1);
                return v;
            }
            std::size_t end = 0;
            while (end < s.size() && s[end] != ' ' && s[end] != '\t' && s[end] != '#') ++end;
            const std::string_view tok = s.substr(0, end);
            *rest = s.substr(end);
            if (tok == "true" || tok == "false") {
                v.kind = Value::Kind::boolean;
                v.flag = tok == "true";
                return v;
            }
            std::string digits;
            for (char c : tok) {
                if (c != '_') digits += c;
            }
            v.text = digits;
            const char* first = digits.data() + (!digits.empty() && digits.front() == '+' ? 1 : 0);
            const char* last = digits.data() + digits.size();
            long long as_int = 0;
            if (auto r = std::from_chars(first, last, as_int); r.ec == std::errc() && r.ptr == last) {
                v.kind = Value::Kind::integer;
                return v;
            }
            // Unsigned integers beyond the signed range.
            std::uint64_t big = 0;
            if (auto r = std::from_chars(first, last, big); r.ec == std::errc() && r.ptr == last) {
                v.kind = Value::Kind::integer;
                return v;
            }
            if (digits.find_first_of("0123456789") != std::string::npos
                && digits.find_first_not_of("0123456789+-.eE") == std::string::npos) {
                double d = 0.0;
                if (auto r = std::from_chars(first, last, d); r.ec == std::errc() && r.ptr == last) {
                    v.kind = Value::Kind::floating;
                    return v;
                }
            }
            fail(line, fmt::format("cannot parse value '{}'", tok));
        }

        void expect(const Value& v, Value::Kind kind, std::string_view key, std::size_t line)
        {
            if (v.kind != kind) fail(line, fmt::format("'{}' expects {}, got {}", key, kind_name(kind), kind_name(v.kind)));
        }

        std::uint64_t to_unsigned(const Value& v, std::string_view key, std::size_t line)
        {
            expect(v, Value::Kind::integer, key, line);
            const char* first = v.text.data() + (v.text.front() == '+' ? 1 : 0);
            std::uint64_t out = 0;
            const auto r = std::from_chars(first, v.text.data() + v.text.size(), out);
            if (r.ec != std::errc() || r.ptr != v.text.data() + v.text.size()) {
                fail(line, fmt::format("'{}' expects a non-negative integer, got {}", key, v.text));
            }
            return out;
        }

        double to_real(const Value& v, std::string_view key, std::size_t line)
        {
            if (v.kind != Value::Kind::integer && v.kind != Value::Kind::floating) {
                fail(line, fmt::format("'{}' expects a number, got {}", key, kind_name(v.kind)));
            }
            const char* first = v.text.data() + (v.text.front() == '+' ? 1 : 0);
            double out = 0.0;
            std::from_chars(first, v.text.data() + v.text.size(), out);
            return out;
        }

        std::string quote(std::string_view s)
        {
            std::string out = "\"";
            for (char c : s) {
                switch (c) {
                case '"': out += "\\\""; break;
                case '\\': out += "\\\\"; break;
                case '\n': out += "\\n"; break;
                case '\t': out += "\\t"; break;
                default: out += c;
                }
            }
            return out + '"';
        }

        std::string real_literal(double d)
        {
            std::string s = fmt::format("{}", d);
            if (s.find_first_of(".eE") == std::string::npos) s += ".0";
            return s;
        }

        /// Named enum values for config strings.
        template <typename E>
        struct Names
        {
            std::vector<std::pair<std::string_view, E>> entries;

            E parse(const Value& v, std::string_view key, std::size_t line) const
            {
                expect(v, Value::Kind::string, key, line);
                for (const auto& [name, value] : entries) {
                    if (name == v.text) return value;
                }
                std::string valid;
                for (const auto& [name, value] : entries) valid += (valid.empty() ? "" : ", ") + std::string(name);
                fail(line, fmt::format("'{}' must be one of {}; got \"{}\"", key, valid, v.text));
            }

            std::string_view name(E e) const
            {
                for (const auto& [name, value] : entries) {
                    if (value == e) return name;
                }
                return "?";
            }
        };

        const Names<BatchStrategy> batch_names{{{"random", BatchStrategy::random},
                                                {"surface_uniform", BatchStrategy::surface_uniform}}};
        const Names<QueryPlacement> placement_names{{{"gaussian", QueryPlacement::gaussian},
                                                     {"space_uniform", QueryPlacement::space_uniform}}};
        const Names<LrSchedule> schedule_names{{{"constant", LrSchedule::constant}, {"cosine", LrSchedule::cosine}}};
        const Names<InitMode> init_names{{{"geometric", InitMode::geometric}, {"random", InitMode::random}}};
        const Names<ad::ActivationKind> activation_names{{{"softplus", ad::ActivationKind::softplus},
                                                      {"relu", ad::ActivationKind::relu}}};
        const Names<MeshFormat> format_names{{{"obj", MeshFormat::obj}, {"ply", MeshFormat::ply}}};

        struct Field
        {
            std::string section;
            std::string key;
            std::function<std::string(const RunConfig&)> get;
            std::function<void(RunConfig&, const Value&, std::size_t)> set;

            std::string path() const { return section.empty() ? key : section + "." + key; }
        };

        template <typename Ref>
        Field count_field(std::string section, std::string key, Ref ref)
        {
            Field f{std::move(section), std::move(key), {}, {}};
            f.get = [ref](const RunConfig& c) { return fmt::format("{}", ref(const_cast<RunConfig&>(c))); };
            f.set = [ref, name = f.path()](RunConfig& c, const Value& v, std::size_t line) {
                ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(to_unsigned(v, name, line));
            };
            return f;
        }

        template <typename Ref>
        Field real_field(std::string section, std::string key, Ref ref)
        {
            Field f{std::move(section), std::move(key), {}, {}};
            f.get = [ref](const RunConfig& c) { return real_literal(ref(const_cast<RunConfig&>(c))); };
            f.set = [ref, name = f.path()](RunConfig& c, const Value& v, std::size_t line) {
                ref(c) = to_real(v, name, line);
            };
            return f;
        }

        template <typename Ref>
        Field string_field(std::string section, std::string key, Ref ref)
        {
            Field f{std::move(section), std::move(key), {}, {}};
            f.get = [ref](const RunConfig& c) { return quote(ref(const_cast<RunConfig&>(c))); };
            f.set = [ref, name = f.path()](RunConfig& c, const Value& v, std::size_t line) {
                expect(v, Value::Kind::string, name, line);
                ref(c) = v.text;
            };
            return f;
        }

        template <typename Ref>
        Field bool_field(std::string section, std::string key, Ref ref)
        {
            Field f{std::move(section), std::move(key), {}, {}};
            f.get = [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); };
            f.set = [ref, name = f.path()](RunConfig& c, const Value& v, std::size_t line) {
                expect(v, Value::Kind::boolean, name, line);
                ref(c) = v.flag;
            };
            return f;
        }

        template <typename E, typename Ref>
        Field enum_field(std::string section, std::string key, const Names<E>& names, Ref ref)
        {
            Field f{std::move(section), std::move(key), {}, {}};
            f.get = [ref, &names](const RunConfig& c) { return quote(names.name(ref(const_cast<RunConfig&>(c)))); };
            f.set = [ref, &names, name = f.path()](RunConfig& c, const Value& v, std::size_t line) {
                ref(c) = names.parse(v, name, line);
            };
            return f;
        }

        const std::vector<Field>& fields()
        {
            static const std::vector<Field> all = [] {
                std::vector<Field> f;
                f.push_back(string_field("", "preset", [](RunConfig& c) -> std::string& { return c.preset; }));
                f.push_back(string_field("", "input", [](RunConfig& c) -> std::string& { return c.input; }));
                f.push_back(string_field("", "out_dir", [](RunConfig& c) -> std::string& { return c.out_dir; }));
                f.push_back(count_field("", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
                f.push_back(count_field("", "points", [](RunConfig& c) -> std::size_t& { return c.points; }));

                f.push_back(count_field("sampler", "queries_per_point",
                                        [](RunConfig& c) -> std::size_t& { return c.sampler.queries_per_point; }));
                f.push_back(count_field("sampler", "sigma_k", [](RunConfig& c) -> std::size_t& { return c.sampler.sigma_k; }));
                f.push_back(real_field("sampler", "sigma_scale", [](RunConfig& c) -> double& { return c.sampler.sigma_scale; }));
                f.push_back(count_field("sampler", "batch_size",
                                        [](RunConfig& c) -> std::size_t& { return c.sampler.batch_size; }));
                f.push_back(enum_field("sampler", "batch_strategy", batch_names,
                                       [](RunConfig& c) -> BatchStrategy& { return c.sampler.batch_strategy; }));
                f.push_back(enum_field("sampler", "placement", placement_names,
                                       [](RunConfig& c) -> QueryPlacement& { return c.sampler.placement; }));

                f.push_back(real_field("train", "learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }));
                f.push_back(enum_field("train", "schedule", schedule_names,
                                       [](RunConfig& c) -> LrSchedule& { return c.train.schedule; }));
                f.push_back(count_field("train", "epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }));
                f.push_back(real_field("train", "adam_beta1", [](RunConfig& c) -> double& { return c.train.adam_beta1; }));
                f.push_back(real_field("train", "adam_beta2", [](RunConfig& c) -> double& { return c.train.adam_beta2; }));
                f.push_back(real_field("train", "adam_epsilon", [](RunConfig& c) -> double& { return c.train.adam_epsilon; }));
                f.push_back(enum_field("train", "init", init_names, [](RunConfig& c) -> InitMode& { return c.train.init_mode; }));
                f.push_back(real_field("train", "init_radius", [](RunConfig& c) -> double& { return c.train.init_radius; }));
                f.push_back(real_field("train", "grad_floor", [](RunConfig& c) -> double& { return c.train.grad_floor; }));

                f.push_back(count_field("network", "depth",
                                        [](RunConfig& c) -> std::size_t& { return c.train.architecture.depth; }));
                f.push_back(count_field("network", "hidden_width",
                                        [](RunConfig& c) -> std::size_t& { return c.train.architecture.hidden_width; }));
                f.push_back(enum_field("network", "activation", activation_names,
                                       [](RunConfig& c) -> ad::ActivationKind& { return c.train.architecture.activation.kind; }));
                f.push_back(real_field("network", "beta",
                                       [](RunConfig& c) -> double& { return c.train.architecture.activation.beta; }));
                {
                    // 0 disables the skip connection.
                    Field skip{"network", "skip_at", {}, {}};
                    skip.get = [](const RunConfig& c) {
                        return fmt::format("{}", c.train.architecture.skip_at.value_or(0));
                    };
                    skip.set = [](RunConfig& c, const Value& v, std::size_t line) {
                        const std::uint64_t n = to_unsigned(v, "network.skip_at", line);
                        if (n == 0) {
                            c.train.architecture.skip_at.reset();
                        } else {
                            c.train.architecture.skip_at = static_cast<std::size_t>(n);
                        }
                    };
                    f.push_back(std::move(skip));
                }

                f.push_back(count_field("mesh", "resolution", [](RunConfig& c) -> std::size_t& { return c.mesh.resolution; }));
                f.push_back(real_field("mesh", "padding", [](RunConfig& c) -> double& { return c.mesh.padding; }));
                f.push_back(real_field("mesh", "iso", [](RunConfig& c) -> double& { return c.mesh.iso; }));
                f.push_back(enum_field("mesh", "format", format_names, [](RunConfig& c) -> MeshFormat& { return c.mesh.format; }));

                f.push_back(count_field("eval", "samples", [](RunConfig& c) -> std::size_t& { return c.eval.samples; }));
                f.push_back(real_field("eval", "mu", [](RunConfig& c) -> double& { return c.eval.mu; }));
                f.push_back(bool_field("eval", "require_normals", [](RunConfig& c) -> bool& { return c.eval.require_normals; }));

                f.push_back(real_field("demo2d", "radius", [](RunConfig& c) -> double& { return c.demo.radius; }));
                f.push_back(count_field("demo2d", "samples", [](RunConfig& c) -> std::size_t& { return c.demo.samples; }));
                f.push_back(count_field("demo2d", "raster", [](RunConfig& c) -> std::size_t& { return c.demo.raster; }));
                f.push_back(real_field("demo2d", "extent", [](RunConfig& c) -> double& { return c.demo.extent; }));
                return f;
            }();
            return all;
        }

        const Field* find_field(std::string_view section, std::string_view key)
        {
            for (const Field& f : fields()) {
                if (f.section == section && f.key == key) return &f;
            }
            return nullptr;
        }

        struct Entry
        {
            std::string section;
            std::string key;
            Value value;
            std::size_t line = 0;
        };

        std::vector<Entry> parse_entries(std::string_view text)
        {
            std::vector<Entry> out;
            std::string section;
            std::size_t lineno = 0;
            std::size_t pos = 0;
            while (pos < text.size()) {
                ++lineno;
                const auto nl = text.find('\n', pos);
                const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
                const std::string_view line = trim(text.substr(pos, end - pos));
                pos = end + 1;
                if (line.empty() || line.front() == '#') continue;
                if (line.front() == '[') {
                    const auto close = line.find(']');
                    if (close == std::string_view::npos) fail(lineno, "unterminated section header");
                    const std::string_view after = trim(line.substr(close + 1));
                    if (!after.empty() && after.front() != '#') fail(lineno, "unexpected text after section header");
                    section = std::string(trim(line.substr(1, close - 1)));
                    if (section.empty() || !std::all_of(section.begin(), section.end(), is_key_char)) {
                        fail(lineno, fmt::format("invalid section name '{}'", section));
                    }
                    continue;
                }
                const auto eq = line.find('=');
                if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
                const std::string key(trim(line.substr(0, eq)));
                if (key.empty() || !std::all_of(key.begin(), key.end(), is_key_char)) {
                    fail(lineno, fmt::format("invalid key '{}'", key));
                }
                std::string_view rest;
                Value value = parse_value(trim(line.substr(eq + 1)), lineno, &rest);
                rest = trim(rest);
                if (!rest.empty() && rest.front() != '#') fail(lineno, "unexpected text after value");
                for (const Entry& e : out) {
                    if (e.section == section && e.key == key) {
                        fail(lineno, fmt::format("duplicate key '{}' (first set on line {})", key, e.line));
                    }
                }
                out.push_back({section, key, std::move(value), lineno});
            }
            return out;
        }

        void apply_entry(RunConfig& cfg, const Entry& e)
        {
            const Field* f = find_field(e.section, e.key);
            if (!f) {
                const std::string path = e.section.empty() ? e.key : e.section + "." + e.key;
                fail(e.line, fmt::format("unknown key '{}'", path));
            }
            f->set(cfg, e.value, e.line);
        }
    }

    SamplerConfig RunConfig::sampler_config() const
    {
        SamplerConfig s = sampler;
        s.seed = seed;
        return s;
    }

    TrainConfig RunConfig::train_config() const
    {
        TrainConfig t = train;
        t.seed = seed;
        return t;
    }

    void RunConfig::validate() const
    {
        sampler_config().validate();
        train_config().validate();
        if (mesh.resolution < 2) throw ConfigError("mesh.resolution must be >= 2");
        if (!(mesh.padding >= 0.0)) throw ConfigError("mesh.padding must be >= 0");
        if (!std::isfinite(mesh.iso)) throw ConfigError("mesh.iso must be finite");
        if (eval.samples == 0) throw ConfigError("eval.samples must be >= 1");
        if (!(eval.mu > 0.0)) throw ConfigError("eval.mu must be > 0");
        if (!(demo.radius > 0.0)) throw ConfigError("demo2d.radius must be > 0");
        if (!(demo.extent > demo.radius)) throw ConfigError("demo2d.extent must exceed demo2d.radius");
        if (demo.raster < 2) throw ConfigError("demo2d.raster must be >= 2");
        if (points != 0 && points <= sampler.sigma_k) {
            throw ConfigError(fmt::format("points ({}) must exceed sampler.sigma_k ({})", points, sampler.sigma_k));
        }
    }

    std::string RunConfig::canonical() const
    {
        std::string out;
        std::string section;
        for (const Field& f : fields()) {
            if (f.section != section) {
                section = f.section;
                out += fmt::format("\n[{}]\n", section);
            }
            out += fmt::format("{} = {}\n", f.key, f.get(*this));
        }
        return out;
    }

    std::string RunConfig::hash() const { return sha256_hex(canonical()); }

    RunConfig preset_config(std::string_view name)
    {
        RunConfig cfg;
        cfg.preset = std::string(name);
        if (name == "paper") {
            cfg.points = 20000;
            cfg.sampler.queries_per_point = 25;
            cfg.sampler.batch_size = 5000;
            cfg.train.epochs = 2500;
            cfg.train.architecture.depth = 8;
            cfg.train.architecture.hidden_width = 512;
            cfg.train.architecture.skip_at = 4;
            cfg.mesh.resolution = 128;
        } else if (name == "desk") {
            cfg.points = 2000;
            cfg.sampler.queries_per_point = 25;
            cfg.sampler.batch_size = 1000;
            cfg.train.epochs = 20;
            cfg.train.learning_rate = 5e-4;
            cfg.train.schedule = LrSchedule::cosine;
            cfg.train.architecture.depth = 6;
            cfg.train.architecture.hidden_width = 64;
            cfg.train.architecture.skip_at = 3;
            cfg.mesh.resolution = 64;
        } else {
            throw ConfigError(fmt::format("unknown preset '{}' (valid: paper, desk)", name));
        }
        return cfg;
    }

    std::vector<std::string> preset_names() { return {"desk", "paper"}; }

    RunConfig parse_config(std::string_view text, std::string_view preset)
    {
        const std::vector<Entry> entries = parse_entries(text);
        std::string base = preset.empty() ? "desk" : std::string(preset);
        std::size_t preset_line = 0;
        for (const Entry& e : entries) {
            if (e.section.empty() && e.key == "preset") {
                expect(e.value, Value::Kind::string, "preset", e.line);
                if (preset.empty()) base = e.value.text;
                preset_line = e.line;
            }
        }
        RunConfig cfg;
        try {
            cfg = preset_config(base);
        } catch (const ConfigError& err) {
            fail(preset.empty() ? preset_line : 0, err.what());
        }
        for (const Entry& e : entries) {
            if (!(e.section.empty() && e.key == "preset")) apply_entry(cfg, e);
        }
        return cfg;
    }

    void apply_override(RunConfig& cfg, std::string_view assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos) throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
        const std::string_view path = trim(assignment.substr(0, eq));
        const auto dot = path.find('.');
        Entry e;
        e.section = dot == std::string_view::npos ? std::string() : std::string(path.substr(0, dot));
        e.key = std::string(dot == std::string_view::npos ? path : path.substr(dot + 1));
        if (e.section.empty() && e.key == "preset") {
            throw ConfigError("the preset cannot be overridden per key; pass --preset instead");
        }
        std::string_view rest;
        const std::string_view raw = trim(assignment.substr(eq + 1));
        try {
            try {
                e.value = parse_value(raw, 0, &rest);
                if (!trim(rest).empty()) fail(0, "unexpected text after value");
            } catch (const ParseError&) {
                // Unquoted words are taken as strings on the command line.
                if (raw.empty() || raw.front() == '"') throw;
                e.value = Value{Value::Kind::string, std::string(raw), false};
            }
            apply_entry(cfg, e);
        } catch (const ParseError& err) {
            throw ConfigError(fmt::format("override '{}': {}", assignment, err.what()));
        }
    }

    std::vector<std::string> config_keys()
    {
        std::vector<std::string> out;
        for (const Field& f : fields()) out.push_back(f.path());
        return out;
    }
}
