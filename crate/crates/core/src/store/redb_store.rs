use std::path::Path;

use redb::{
    backends::InMemoryBackend, Database, ReadableDatabase, ReadableTable, Table, TableDefinition,
};

use super::{KeyValue, KvStore, StoreError, Txn};

const RECORDS: TableDefinition<&str, &[u8]> = TableDefinition::new("records");

fn unavailable(err: impl std::fmt::Display) -> StoreError {
    StoreError::Unavailable(err.to_string())
}

/// [`KvStore`] backed by an embedded redb database.
pub struct RedbStore {
    db: Database,
}

impl std::fmt::Debug for RedbStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RedbStore").finish_non_exhaustive()
    }
}

impl RedbStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let db = Database::create(path).map_err(unavailable)?;
        Self::init(db)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        let db = Database::builder()
            .create_with_backend(InMemoryBackend::new())
            .map_err(unavailable)?;
        Self::init(db)
    }

    fn init(db: Database) -> Result<Self, StoreError> {
        let txn = db.begin_write().map_err(unavailable)?;
        txn.open_table(RECORDS).map_err(unavailable)?;
        txn.commit().map_err(unavailable)?;
        Ok(RedbStore { db })
    }
}

fn scan<T: ReadableTable<&'static str, &'static [u8]>>(
    table: &T,
    prefix: &str,
) -> Result<Vec<KeyValue>, StoreError> {
    let mut out = Vec::new();
    for entry in table.range(prefix..).map_err(unavailable)? {
        let (k, v) = entry.map_err(unavailable)?;
        let key = k.value();
        if !key.starts_with(prefix) {
            break;
        }
        out.push((key.to_string(), v.value().to_vec()));
    }
    Ok(out)
}

struct RedbTxn<'t> {
    table: Table<'t, &'static str, &'static [u8]>,
}

impl Txn for RedbTxn<'_> {
    fn get(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self
            .table
            .get(key)
            .map_err(unavailable)?
            .map(|v| v.value().to_vec()))
    }

    fn put(&mut self, key: &str, value: &[u8]) -> Result<(), StoreError> {
        self.table.insert(key, value).map_err(unavailable)?;
        Ok(())
    }

    fn delete(&mut self, key: &str) -> Result<bool, StoreError> {
        Ok(self.table.remove(key).map_err(unavailable)?.is_some())
    }

    fn scan_prefix(&self, prefix: &str) -> Result<Vec<KeyValue>, StoreError> {
        scan(&self.table, prefix)
    }
}

impl KvStore for RedbStore {
    fn get(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let txn = self.db.begin_read().map_err(unavailable)?;
        let table = txn.open_table(RECORDS).map_err(unavailable)?;
        Ok(table
            .get(key)
            .map_err(unavailable)?
            .map(|v| v.value().to_vec()))
    }

    fn scan_prefix(&self, prefix: &str) -> Result<Vec<KeyValue>, StoreError> {
        let txn = self.db.begin_read().map_err(unavailable)?;
        let table = txn.open_table(RECORDS).map_err(unavailable)?;
        scan(&table, prefix)
    }

    fn transaction(
        &self,
        f: &mut dyn FnMut(&mut dyn Txn) -> Result<(), StoreError>,
    ) -> Result<(), StoreError> {
        let txn = self.db.begin_write().map_err(unavailable)?;
        let result = {
            let table = txn.open_table(RECORDS).map_err(unavailable)?;
            let mut handle = RedbTxn { table };
            f(&mut handle)
        };
        match result {
            Ok(()) => txn.commit().map_err(unavailable),
            Err(err) => {
                txn.abort().map_err(unavailable)?;
                Err(err)
            }
        }
    }
}
