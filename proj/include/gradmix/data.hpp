#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gradmix/rng.hpp"
#include "gradmix/types.hpp"

namespace gradmix {

struct TaskData {
    std::vector<int> classes;  // sorted, disjoint across tasks
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Ordered sequence of disjoint-class tasks over a shared label space.
struct TaskStream {
    std::vector<TaskData> tasks;
    int class_count = 0;
    int input_dim = 0;

    void check_disjoint() const;  // throws std::logic_error on overlap
};

/// Class-balanced store of samples from completed tasks. Capacity grows by
/// N per newly completed class; the in-progress task is never present.
class ReplayBuffer {
   public:
    explicit ReplayBuffer(int per_class = 0) : per_class_(per_class) {}

    /// Append up to `per_class` uniformly sampled (without replacement)
    /// samples for each class of a finished task. Re-inserting a class is a
    /// logic error.
    void add_task(const TaskData& task, Rng& rng);

    bool empty() const { return store_.empty(); }
    int total() const;
    int per_class_capacity() const { return per_class_; }
    bool has_class(int label) const { return store_.count(label) > 0; }
    std::vector<int> classes() const;
    const std::vector<Sample>& samples_of(int label) const;

    /// All samples in fixed order: class ascending, stored order within.
    std::vector<const Sample*> flat() const;

    /// Place samples for a class verbatim (checkpoint restore).
    void insert_raw(int label, std::vector<Sample> samples);

   private:
    int per_class_;
    std::map<int, std::vector<Sample>> store_;
};

/// Parse an IDX image/label file pair into samples with pixels in [0,1].
/// Throws format_error (with byte offset) on malformed input.
std::vector<Sample> load_idx(const std::string& images_path, const std::string& labels_path);

/// Writers for the same layout; used by fixtures and the inspect tool.
void write_idx_images(const std::string& path, const std::vector<std::vector<std::uint8_t>>& images,
                      int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

/// Split samples into L = class_count / classes_per_task tasks of disjoint
/// classes. `class_order` must be a permutation of 0..c-1; pass the identity
/// for the default ascending order.
TaskStream make_task_stream(const std::vector<Sample>& train, const std::vector<Sample>& test,
                            int class_count, int classes_per_task,
                            const std::vector<int>& class_order);

std::vector<int> identity_order(int class_count);
std::vector<int> permuted_order(int class_count, Rng& rng);

/// Isotropic Gaussian blobs, one per class, with pairwise mean distance
/// >= separation (separation 0 collapses all means). Deterministic per seed.
TaskStream make_synthetic_stream(int class_count, int dim, int train_per_class,
                                 int test_per_class, double separation, int classes_per_task,
                                 std::uint64_t seed);

struct Batch {
    std::vector<int> task_idx;    // indices into the current task's train set
    std::vector<int> buffer_idx;  // indices into ReplayBuffer::flat()
    std::size_t size() const { return task_idx.size() + buffer_idx.size(); }
};

/// Seeded ER batch plan: B1 chunks partition a shuffle of the task data;
/// each B2 is a fresh uniform draw from the buffer (without replacement
/// inside a batch) of size min(|B1|, buffer size). Empty buffer gives
/// empty B2.
std::vector<Batch> make_batches(int task_size, int buffer_size, int batch_size, Rng& rng);

}  // namespace gradmix
