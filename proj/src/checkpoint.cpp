#include <fstream>
#include <iomanip>
#include <sstream>

#include "stepseq/seqnet.hpp"

namespace stepseq::seqnet {

std::string checkpoint_text(const ModelSpec& spec, const ModelParams& params) {
    check_shapes(spec, params);
    std::ostringstream os;
    os << std::setprecision(17);
    os << kCheckpointMagic << '\n';
    os << "spec " << spec.input_dim << ' ' << spec.embed_dim << ' ' << spec.hidden_dim << ' '
       << spec.num_lstm_layers << ' ' << spec.num_classes << ' ' << spec.dropout_rate << ' '
       << spec.head_dims.size();
    for (auto w : spec.head_dims) os << ' ' << w;
    os << '\n';
    for (const auto& t : params.tensors()) {
        os << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
        // storage is column-major; payload is row-major
        for (Eigen::Index i = 0; i < t.rows; ++i) {
            for (Eigen::Index j = 0; j < t.cols; ++j) {
                if (j > 0) os << ' ';
                os << t.data[static_cast<std::size_t>(j * t.rows + i)];
            }
            os << '\n';
        }
    }
    os << "end\n";
    return os.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) {
        throw std::runtime_error("checkpoint: missing or unsupported magic line");
    }
    auto fail = [](const std::string& why) { return std::runtime_error("checkpoint: " + why); };

    Checkpoint ck;
    std::string word;
    std::size_t n_head = 0;
    if (!(in >> word) || word != "spec") throw fail("expected spec line");
    auto& s = ck.spec;
    if (!(in >> s.input_dim >> s.embed_dim >> s.hidden_dim >> s.num_lstm_layers >> s.num_classes >>
          s.dropout_rate >> n_head)) {
        throw fail("malformed spec line");
    }
    s.head_dims.resize(n_head);
    for (auto& w : s.head_dims)
        if (!(in >> w)) throw fail("malformed head widths");
    s.validate();

    ck.params = init_params(s, 0);
    for (auto& t : ck.params.tensors()) {
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        if (!(in >> word >> name >> rows >> cols) || word != "tensor") throw fail("expected tensor header");
        if (name != t.name || rows != t.rows || cols != t.cols) {
            throw fail("tensor " + name + " does not match the declared spec (expected " + t.name + ")");
        }
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j)
                if (!(in >> t.data[static_cast<std::size_t>(j * rows + i)])) {
                    throw fail("truncated payload in " + name);
                }
    }
    if (!(in >> word) || word != "end") throw fail("missing end marker");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params) {
    const std::string text = checkpoint_text(spec, params);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace stepseq::seqnet
