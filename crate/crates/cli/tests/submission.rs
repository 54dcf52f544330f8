use hazardscope_cli::submission::{
    read_submission_from, write_submission_to, HazardSlot, SubmissionRow, SubmissionTable,
};
use proptest::prelude::*;

fn arb_row(slots: usize) -> impl Strategy<Value = SubmissionRow> {
    let slot =
        ("[0-9]{1,3}", prop::option::of("[a-z]{1,8}( [a-z]{1,8}){0,3}")).prop_map(|(track_id, name)| HazardSlot {
            track_id,
            name: name.unwrap_or_default(),
        });
    (any::<bool>(), prop::collection::vec(slot, 0..=slots)).prop_map(|(driver_state_changed, hazards)| SubmissionRow {
        driver_state_changed,
        hazards,
    })
}

fn arb_table() -> impl Strategy<Value = SubmissionTable> {
    (1usize..6).prop_flat_map(|slots| {
        prop::collection::btree_map(("[a-z]{1,4}(_[a-z0-9]{1,3})?", 0usize..500), arb_row(slots), 0..20).prop_map(
            move |rows| {
                let mut table = SubmissionTable::new(slots).unwrap();
                for ((video, frame), row) in rows {
                    table.insert(&video, frame, row).unwrap();
                }
                table
            },
        )
    })
}

proptest! {
    #[test]
    fn write_then_read_is_identity(table in arb_table()) {
        let mut bytes = Vec::new();
        write_submission_to(&table, &mut bytes).unwrap();
        let back = read_submission_from(bytes.as_slice(), "mem").unwrap();
        prop_assert_eq!(back, table);
    }
}
